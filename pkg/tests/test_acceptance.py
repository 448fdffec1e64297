"""Acceptance suite: one test per criterion, each printed in the terminal summary.

Numbers that the engine must reproduce are computed by the independent
oracles in oracles.py or frozen from hand computation, never copied from
engine output.
"""

import filecmp
import random
import socket
import time

import pytest

import factrag as fr
from factrag.harness import ReportLayout, mock_bindings
from factrag.knowledgebase import Document, KbMode, KbStats, KnowledgeBase
from factrag.mocks import HashingEmbedder, IdentityEmbedder, SubstringReranker
from factrag.retrieval import make_run

from conftest import random_article_text
from oracles import (
    ap_oracle,
    bm25_oracle,
    bm25plus_oracle,
    hit_oracle,
    rouge_lsum_oracle,
    rr_oracle,
)


def make_kb(texts):
    docs = tuple(Document(id=f"d{i:04d}", text=t) for i, t in enumerate(texts))
    return KnowledgeBase(mode=KbMode.GOLD_ARTICLES, documents=docs, stats=KbStats(len(docs), 0, 0, 0))


def run_of(query_id, doc_ids):
    scored = [(doc_id, float(len(doc_ids) - i)) for i, doc_id in enumerate(doc_ids)]
    return make_run(query_id, scored, len(doc_ids), "t")


@pytest.mark.criterion(1, "BM25/BM25+ match the naive per-term oracle on 200 docs x 50 queries")
def test_criterion_1_bm25_oracle_equivalence():
    started = time.perf_counter()
    rng = random.Random(20240)
    vocab = [f"term{i}" for i in range(150)]
    texts = [" ".join(rng.choices(vocab, k=rng.randint(5, 80))) for _ in range(200)]
    tokenized = [fr.tokenize(t) for t in texts]
    index = fr.build_sparse_index(make_kb(texts))
    queries = [rng.choices(vocab, k=rng.randint(1, 6)) for _ in range(50)]
    worst = 0.0
    for query in queries:
        engine_bm25 = fr.score_bm25(query, index)
        engine_plus = fr.score_bm25plus(query, index)
        oracle_bm25 = bm25_oracle(query, tokenized)
        oracle_plus = bm25plus_oracle(query, tokenized)
        for got, want in ((engine_bm25, oracle_bm25), (engine_plus, oracle_plus)):
            for g, w in zip(got.tolist(), want):
                worst = max(worst, abs(g - w))
    elapsed = time.perf_counter() - started
    assert worst <= 1e-9, f"worst deviation {worst}"
    assert elapsed < 10.0, f"took {elapsed:.1f}s"


@pytest.mark.criterion(2, "metric golden values and brute-force oracle agreement on 100 instances")
def test_criterion_2_metric_goldens():
    # mrr over first-relevant ranks {1, 4} at k=10
    runs = [run_of("q1", ["r1", "a", "b", "c"]), run_of("q2", ["a", "b", "c", "r2"])]
    qrels = {"q1": {"r1"}, "q2": {"r2"}}
    assert fr.mrr_at_k(runs, qrels, 10).mean == 0.625

    # map over [d1, x, d3] with both d1 and d3 relevant at k=3
    report = fr.map_at_k([run_of("q", ["d1", "x", "d3"])], {"q": {"d1", "d3"}}, 3)
    assert abs(report.mean - 0.8333333333333333) <= 1e-9

    # hit_rate cutoff semantics around the relevant rank
    cutoff_runs = [run_of("q", ["x", "rel", "y"])]
    cutoff_qrels = {"q": {"rel"}}
    assert fr.hit_rate_at_k(cutoff_runs, cutoff_qrels, 1).mean == 0.0
    assert fr.hit_rate_at_k(cutoff_runs, cutoff_qrels, 2).mean == 1.0

    rng = random.Random(77)
    for _ in range(100):
        n_docs = rng.randint(2, 30)
        ids = [f"d{i}" for i in range(n_docs)]
        rng.shuffle(ids)
        ranked = ids[: rng.randint(1, n_docs)]
        relevant = set(rng.sample(ids, rng.randint(0, n_docs)))
        k = rng.randint(1, 12)
        run = run_of("q", ranked)
        qrels = {"q": relevant}
        assert fr.hit_rate_at_k([run], qrels, k).mean == hit_oracle(ranked, relevant, k)
        assert fr.mrr_at_k([run], qrels, k).mean == rr_oracle(ranked, relevant, k)
        assert fr.map_at_k([run], qrels, k).mean == ap_oracle(ranked, relevant, k)


@pytest.mark.criterion(3, "map_at_k equals mrr_at_k when every query has exactly one relevant doc")
def test_criterion_3_single_relevant_equivalence():
    rng = random.Random(31)
    for _ in range(50):
        n_queries = rng.randint(1, 8)
        runs = []
        qrels = {}
        for q in range(n_queries):
            n_docs = rng.randint(1, 20)
            ids = [f"d{q}_{i}" for i in range(n_docs)]
            rng.shuffle(ids)
            runs.append(run_of(f"q{q}", ids))
            qrels[f"q{q}"] = {rng.choice(ids)}
        for k in (1, rng.randint(1, 10), 10):
            assert fr.map_at_k(runs, qrels, k).mean == fr.mrr_at_k(runs, qrels, k).mean


@pytest.mark.criterion(4, "chunker budget and sentence round-trip over 1,000 random articles")
def test_criterion_4_chunker_contract():
    started = time.perf_counter()
    rng = random.Random(404)
    config = fr.ChunkingConfig(max_chunk_tokens=100)
    for _ in range(1000):
        text = random_article_text(rng)
        chunks = fr.chunk_text(text, "a", config)
        for chunk in chunks:
            if not chunk.oversized:
                assert chunk.token_count <= 100
                assert len(chunk.text.split()) <= 100
            else:
                assert len(fr.split_sentences(chunk.text)) == 1
        rejoined = " ".join(c.text for c in chunks)
        assert [s.text for s in fr.split_sentences(rejoined)] == [
            s.text for s in fr.split_sentences(text)
        ]
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"took {elapsed:.1f}s"


@pytest.mark.criterion(5, "ROUGE-LSum agrees with the DP union-LCS oracle on 500 random pairs")
def test_criterion_5_rouge_oracle_agreement():
    rng = random.Random(55)
    vocab = ["river", "stone", "cold", "warm", "light", "dark", "wind", "rain", "dust", "leaf"]
    for trial in range(500):
        def sentence():
            return (" ".join(rng.choices(vocab, k=rng.randint(1, 14)))).capitalize() + "."

        candidate = sentence()
        reference = sentence()
        got = fr.rouge_lsum(candidate, reference)
        want = rouge_lsum_oracle(
            [fr.tokenize(s.text) for s in fr.split_sentences(candidate)],
            [fr.tokenize(s.text) for s in fr.split_sentences(reference)],
        )
        for g, w in zip(got, want):
            assert abs(g - w) <= 1e-9


@pytest.mark.criterion(6, "silver evidence filter drops all five platforms and claim sources")
def test_criterion_6_silver_filter():
    clean = [
        "https://stats.example.gov/figures",
        "https://research.example.edu/report",
        "https://registry.example.org/entry",
    ]
    article = fr.ArticleRecord(
        id="a1",
        title="t",
        text="Body text here.",
        evidence_urls=(
            clean[0],
            "https://twitter.com/user/status/1",
            "https://www.facebook.com/story/2",
            clean[1],
            "https://instagram.com/p/3",
            "https://tiktok.com/@user/video/4",
            "https://reddit.com/r/all/5",
            "https://x.com/user/status/6",
            "https://questionable.example.com/claim-origin",
            clean[2],
        ),
        claim_source_urls=("https://questionable.example.com/claim-origin",),
    )
    assert fr.extract_evidence_urls(article) == clean


@pytest.mark.criterion(7, "end-to-end mock run on the bundled toy corpus, byte-identical on rerun")
def test_criterion_7_end_to_end_mock_run(tmp_path, monkeypatch):
    def no_network(*args, **kwargs):
        raise AssertionError("network access attempted during the mock run")

    monkeypatch.setattr(socket, "socket", no_network)
    started = time.perf_counter()

    corpus = fr.load_toy_corpus()
    assert len(corpus.claims) == 12 and len(corpus.articles) == 12
    kb, qrels = fr.build_gold_kb(corpus.articles, corpus.claims, fr.KbMode.GOLD_ARTICLES)
    bindings = mock_bindings()
    bindings.embedder = IdentityEmbedder(keys=[c.text for c in corpus.claims])
    kbs = {fr.KbMode.GOLD_ARTICLES: (kb, qrels)}

    def run_all(out_dir):
        records = []
        for retriever in (fr.RetrieverKind.DENSE, fr.RetrieverKind.LLM):
            cell = fr.RunCell(
                style=fr.Style.NEUTRAL,
                fact_extraction=False,
                retriever=retriever,
                kb_mode=fr.KbMode.GOLD_ARTICLES,
                gen_setup=fr.GenSetup.ZERO_SHOT,
                k_values=tuple(range(1, 11)),
                seed=7,
            )
            records.append(fr.run_cell(cell, corpus, kbs, bindings, out_dir))
        return records

    first = run_all(tmp_path / "one")
    for record in first:
        assert record.retrieval["hit_rate"][1].mean == 1.0

    # hybrid output stays inside the union of its candidate pools
    sparse = fr.SparseRetriever(kb, "bm25plus")
    dense = fr.DenseRetriever(kb, embedder=bindings.embedder)
    for claim in corpus.claims:
        pool = 10
        union = set(sparse.retrieve(claim.text, pool).doc_ids()) | set(
            dense.retrieve(claim.text, pool).doc_ids()
        )
        hybrid = fr.hybrid_retrieve(claim.text, 10, pool, sparse, dense, SubstringReranker())
        assert set(hybrid.doc_ids()) <= union

    # zero-shot generation parsed a reply for every claim
    for record in first:
        verdict_lines = (record.path / "verdicts.jsonl").read_text().splitlines()
        assert len(verdict_lines) == 12
        import json

        for line in verdict_lines:
            verdict = json.loads(line)
            assert verdict["text"]
            assert not verdict["parse_fallback"]

    second = run_all(tmp_path / "two")
    for rec_one, rec_two in zip(first, second):
        for name in ("run.trec", "queries.jsonl", "verdicts.jsonl", "report.json"):
            assert filecmp.cmp(rec_one.path / name, rec_two.path / name, shallow=False), name

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


@pytest.mark.criterion(8, "mean hit_rate@10 never increases across three rising noise levels")
def test_criterion_8_noise_degradation():
    build_rng = random.Random(808)
    vocab = [f"word{i}" for i in range(400)]
    articles = []
    claims = []
    for i in range(40):
        tokens = build_rng.choices(vocab, k=60)
        text = (" ".join(tokens)).capitalize() + "."
        articles.append(fr.ArticleRecord(id=f"a{i:03d}", title="t", text=text))
        topic = build_rng.sample(tokens, 12)
        claims.append(
            fr.ClaimRecord(
                id=f"c{i:03d}",
                style=fr.Style.NEUTRAL,
                emotion=None,
                text=" ".join(topic),
                article_id=f"a{i:03d}",
                gold_verdict="v",
            )
        )
    kb, qrels = fr.build_gold_kb(articles, claims, fr.KbMode.GOLD_ARTICLES)
    embedder = HashingEmbedder()
    retriever = fr.DenseRetriever(kb, embedder=embedder)

    levels = (0, 20, 80)
    sums = {level: 0.0 for level in levels}
    for seed in range(100):
        for level in levels:
            rng = random.Random(9000 + seed)
            runs = [
                retriever.retrieve(fr.inject_claim_noise(c.text, level, rng), 10, query_id=c.id)
                for c in claims
            ]
            sums[level] += fr.hit_rate_at_k(runs, qrels, 10).mean
    means = [sums[level] / 100 for level in levels]
    assert means[0] >= means[1] >= means[2], f"means not monotone: {means}"
    assert means[0] > means[2], f"no measurable degradation: {means}"


ZERO_SHOT_LITERAL = '''Based on the provided context, respond to the claim, ensuring a thorough explanation. Use only the given context. Reply in no more than three sentences. Avoid mentioning the context in the reply. Match the communication style of the claim and address the possible emotional component present in it, if needed. If the context is insufficient, state that you don't know. Format your response as follows:

Reply: [your_reply]

The context information is provided below (in between xml tags).

<context>

The audited accounts put the overrun at 11 million pounds.

</context>

Claim: "The tram line cost 48 million pounds more than budgeted."'''

FACT_EXTRACTION_LITERAL = '''Extract from the following text the main fact. Remove possible opinions or emotional statement.
Report results in the following format: FACT:[main fact]

Here there is an example:
TEXT:"I just heard about the Covid-19 vaccines & sadly they don't seem to be very effective in preventing the virus. Really disappointing! #vaccineineffective #covid19vaccine"
FACT:"The Covid-19 vaccines offer very little protection against the disease."

Now extract the main fact from the following text:
TEXT:Furious about this tram nonsense!! 48 million over budget?!'''


@pytest.mark.criterion(9, "zero-shot and fact-extraction prompts byte-match their literals")
def test_criterion_9_prompt_golden_files():
    rendered = fr.build_prompt(
        "The tram line cost 48 million pounds more than budgeted.",
        ["The audited accounts put the overrun at 11 million pounds."],
    ).rendered
    assert rendered == ZERO_SHOT_LITERAL
    prompt = fr.pipeline.fact_extraction_prompt("Furious about this tram nonsense!! 48 million over budget?!")
    assert prompt == FACT_EXTRACTION_LITERAL


@pytest.mark.criterion(10, "full grid expands to 40 cells and reports in the 5x4 table shape")
def test_criterion_10_matrix_arithmetic(toy_corpus, tmp_path):
    cells = fr.expand_matrix(fr.full_grid_config())
    enumerated = {
        (style, extraction, retriever, kb)
        for kb in ("gold_articles", "gold_chunks")
        for style, extraction in (
            ("neutral", False),
            ("smp", False),
            ("emotional", False),
            ("smp", True),
            ("emotional", True),
        )
        for retriever in ("bm25", "dense", "hybrid", "llm")
    }
    assert len(cells) == 40
    assert {
        (c.style.value, c.fact_extraction, c.retriever.value, c.kb_mode.value) for c in cells
    } == enumerated

    corpus = fr.link_corpus(fr.styled_variants(toy_corpus.claims), toy_corpus.articles)
    kbs = {
        mode: fr.build_gold_kb(corpus.articles, corpus.claims, mode)
        for mode in (fr.KbMode.GOLD_ARTICLES, fr.KbMode.GOLD_CHUNKS)
    }
    records, failed = fr.run_matrix(fr.full_grid_config(), corpus, kbs, mock_bindings(), tmp_path)
    assert failed == []
    assert len(records) == 40

    paths = fr.report(records, ReportLayout.PER_RETRIEVER, tmp_path / "tables")
    text = paths["text"].read_text()
    for block_title in ("gold_articles :: hit_rate@1", "gold_chunks :: map@10"):
        block_start = text.index(block_title)
        block = text[block_start:].split("\n\n")[0].splitlines()
        header = block[2].split()
        assert header == ["bm25", "dense", "hybrid", "llm"]
        data_rows = block[3:]
        assert [row.split()[0] for row in data_rows] == [
            "neutral",
            "smp",
            "emotional",
            "smp_facts",
            "emotional_facts",
        ]
