"""The four retriever families side by side.

Sparse (BM25 and BM25+), dense cosine search, hybrid with a cross-encoder
reranker, and LLM-style retrieval with an instruction-prefixed query. The
mock hashing embedder and substring reranker keep everything offline; swap
in HttpEmbedder / HttpReranker configs for real backends.
"""

from factrag import (
    DenseRetriever,
    HybridRetriever,
    KbMode,
    SparseRetriever,
    build_gold_kb,
    hit_rate_at_k,
    llm_retriever,
    load_toy_corpus,
    mrr_at_k,
)
from factrag.mocks import HashingEmbedder, SubstringReranker

corpus = load_toy_corpus()
kb, qrels = build_gold_kb(corpus.articles, corpus.claims, KbMode.GOLD_ARTICLES)
embedder = HashingEmbedder()

retrievers = {
    "bm25": SparseRetriever(kb, "bm25"),
    "bm25plus": SparseRetriever(kb, "bm25plus"),
    "dense": DenseRetriever(kb, embedder=embedder),
    "hybrid": HybridRetriever(kb, embedder, SubstringReranker(), pool_size=10),
    "llm": llm_retriever(kb, embedder),
}

print(f"{'retriever':<10} {'hit@1':>6} {'mrr@10':>7}")
for name, retriever in retrievers.items():
    runs = [retriever.retrieve(c.text, 10, query_id=c.id) for c in corpus.claims]
    hit1 = hit_rate_at_k(runs, qrels, 1).mean
    mrr10 = mrr_at_k(runs, qrels, 10).mean
    print(f"{name:<10} {hit1:>6.3f} {mrr10:>7.3f}")

# A single ranked run, the unit every evaluator consumes.
run = retrievers["bm25"].retrieve(corpus.claims[0].text, 3, query_id=corpus.claims[0].id)
print(f"\ntop-3 for claim {run.query_id} via {run.retriever_tag}:")
for rank, (doc_id, score) in enumerate(run.entries, 1):
    print(f"  {rank}. {doc_id}  score={score:.3f}")
