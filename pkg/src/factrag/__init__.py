"""factrag: a retrieval-augmented fact-checking pipeline engine and benchmark harness.

Build gold/silver evidence knowledge bases, retrieve with sparse, dense,
hybrid-reranked, or instruction-embedded LLM retrievers, generate verdicts
through pluggable providers, and score both phases.
"""

from .corpus import (
    ArticleRecord,
    Chunk,
    ChunkingConfig,
    ClaimRecord,
    Corpus,
    Sentence,
    Style,
    chunk_document,
    chunk_text,
    link_corpus,
    load_articles,
    load_claims,
    split_sentences,
    styled_variants,
)
from .evaluation import (
    GenerationReport,
    RetrievalReport,
    RougeScore,
    evaluate_generation,
    hit_rate_at_k,
    load_qrels,
    map_at_k,
    mrr_at_k,
    rouge_lsum,
    save_qrels,
)
from .harness import (
    ExperimentConfig,
    ProviderBindings,
    ReportLayout,
    ResultRecord,
    RetrieverKind,
    RunCell,
    expand_matrix,
    inject_claim_noise,
    mock_bindings,
    full_grid_config,
    report,
    run_cell,
    run_matrix,
)
from .knowledgebase import (
    Document,
    EvidenceRecord,
    KbMode,
    KbStats,
    KnowledgeBase,
    build_gold_kb,
    build_silver_kb,
    extract_evidence_urls,
    extract_main_text,
    fetch_evidence,
    load_kb,
    save_kb,
)
from .pipeline import (
    Exemplar,
    FinetuneExample,
    GenSetup,
    PromptMode,
    PromptSpec,
    VerdictRecord,
    assemble_context,
    build_finetune_dataset,
    build_prompt,
    extract_fact,
    generate_verdict,
)
from .providers import (
    GenerationRequest,
    GenerationResult,
    ProviderConfig,
    ScoreKind,
    embed_batch,
    generate,
    rerank_batch,
    score_pairs,
)
from .retrieval import (
    BM25Params,
    DenseIndex,
    DenseRetriever,
    HybridRetriever,
    RankedRun,
    SparseIndex,
    SparseRetriever,
    build_dense_index,
    build_sparse_index,
    hybrid_retrieve,
    llm_retriever,
    read_run,
    score_bm25,
    score_bm25plus,
    tokenize,
    write_run,
)
from .toy import load_toy_articles, load_toy_claims, load_toy_corpus

__version__ = "0.1.0"
