"""Sparse (BM25/BM25+), dense, LLM-embedding, and hybrid reranked retrieval.

All retrievers return RankedRun objects: score-descending, doc-id tie-broken,
deduplicated top-k lists. Dense search is an exact dot-product scan; at the
corpus sizes this package targets no approximate index is needed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyKb, KOutOfRange, ProviderError
from .knowledgebase import KnowledgeBase
from .providers import Embedder, Reranker

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

DEFAULT_QUERY_INSTRUCTION = "Given a claim, retrieve documents that help verify or refute the claim."


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics; no stemming, no stopwords."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.5
    b: float = 0.75
    delta: float = 1.0
    epsilon: float = 0.25

    def __post_init__(self):
        if self.k1 < 0 or not 0 <= self.b <= 1 or self.delta < 0 or self.epsilon < 0:
            raise ValueError("invalid BM25 parameters")


@dataclass(frozen=True)
class SparseIndex:
    postings: dict  # term -> list[(doc_index, term_frequency)]
    doc_lengths: np.ndarray
    avgdl: float
    doc_freq: dict  # term -> document frequency
    N: int
    doc_ids: tuple[str, ...]


def build_sparse_index(kb: KnowledgeBase) -> SparseIndex:
    if not kb.documents:
        raise EmptyKb("cannot index an empty knowledge base")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths = np.zeros(len(kb.documents), dtype=np.float64)
    for index, doc in enumerate(kb.documents):
        terms = tokenize(doc.text)
        doc_lengths[index] = len(terms)
        counts: dict[str, int] = {}
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((index, tf))
    doc_freq = {term: len(entries) for term, entries in postings.items()}
    return SparseIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avgdl=float(doc_lengths.mean()),
        doc_freq=doc_freq,
        N=len(kb.documents),
        doc_ids=tuple(d.id for d in kb.documents),
    )


def _okapi_idf(index: SparseIndex, params: BM25Params) -> dict:
    """Okapi IDF with the floor convention: negative values are replaced by
    epsilon times the mean of the positive IDFs."""
    idf = {}
    positive = []
    for term, df in index.doc_freq.items():
        value = math.log((index.N - df + 0.5) / (df + 0.5))
        idf[term] = value
        if value > 0:
            positive.append(value)
    mean_positive = sum(positive) / len(positive) if positive else 0.0
    floor = params.epsilon * mean_positive
    for term, value in idf.items():
        if value < 0:
            idf[term] = floor
    return idf


def score_bm25(query_terms: Sequence[str], index: SparseIndex, params: BM25Params = BM25Params()) -> np.ndarray:
    """Okapi BM25 scores for every document, query terms counted with multiplicity."""
    idf = _okapi_idf(index, params)
    scores = np.zeros(index.N, dtype=np.float64)
    norm = params.k1 * (1 - params.b + params.b * index.doc_lengths / index.avgdl)
    for term in query_terms:
        entries = index.postings.get(term)
        if not entries:
            continue
        weight = idf[term]
        for doc_index, tf in entries:
            scores[doc_index] += weight * tf * (params.k1 + 1) / (tf + norm[doc_index])
    return scores


def score_bm25plus(
    query_terms: Sequence[str], index: SparseIndex, params: BM25Params = BM25Params()
) -> np.ndarray:
    """Lower-bounded BM25+: present terms gain a +delta shift, absent terms score 0."""
    scores = np.zeros(index.N, dtype=np.float64)
    norm = params.k1 * (1 - params.b + params.b * index.doc_lengths / index.avgdl)
    for term in query_terms:
        entries = index.postings.get(term)
        if not entries:
            continue
        weight = math.log((index.N + 1) / index.doc_freq[term])
        for doc_index, tf in entries:
            scores[doc_index] += weight * (params.delta + tf * (params.k1 + 1) / (tf + norm[doc_index]))
    return scores


@dataclass(frozen=True)
class DenseIndex:
    vectors: np.ndarray  # (N, dim), rows unit-normalized
    dim: int
    provider_tag: str


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        raise ProviderError("zero-norm embedding returned by provider")
    return matrix / norms[:, None]


def build_dense_index(
    kb: KnowledgeBase, embedder: Embedder, doc_instruction: str | None = None
) -> DenseIndex:
    """Embed every document (optionally instruction-prefixed) into unit vectors."""
    if not kb.documents:
        raise EmptyKb("cannot index an empty knowledge base")
    texts = [d.text for d in kb.documents]
    if doc_instruction:
        texts = [f"{doc_instruction}\n{t}" for t in texts]
    rows = embedder.embed(texts)
    dim = len(rows[0])
    for row in rows:
        if len(row) != dim:
            raise ProviderError(f"embedding dimensions disagree: {len(row)} vs {dim}")
    matrix = _normalize_rows(np.asarray(rows, dtype=np.float64))
    return DenseIndex(vectors=matrix, dim=dim, provider_tag=getattr(embedder, "tag", "unknown"))


@dataclass(frozen=True)
class RankedRun:
    query_id: str
    entries: tuple  # ((doc_id, score), ...) sorted by score desc, then doc_id asc
    retriever_tag: str

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]


def make_run(query_id: str, scored: Iterable[tuple[str, float]], k: int, tag: str) -> RankedRun:
    ordered = sorted(scored, key=lambda entry: (-entry[1], entry[0]))[:k]
    return RankedRun(
        query_id=query_id,
        entries=tuple((doc_id, float(score)) for doc_id, score in ordered),
        retriever_tag=tag,
    )


def _check_k(k: int, size: int) -> None:
    if k < 1 or k > size:
        raise KOutOfRange(k, size)


class SparseRetriever:
    """BM25 or BM25+ over a tokenized inverted index."""

    def __init__(self, kb: KnowledgeBase, variant: str = "bm25", params: BM25Params = BM25Params()):
        if variant not in ("bm25", "bm25plus"):
            raise ValueError(f"unknown sparse variant {variant!r}")
        self.kb = kb
        self.variant = variant
        self.params = params
        self.index = build_sparse_index(kb)
        self.tag = variant

    def retrieve(self, query: str, k: int, query_id: str = "query") -> RankedRun:
        _check_k(k, self.index.N)
        terms = tokenize(query)
        scorer = score_bm25 if self.variant == "bm25" else score_bm25plus
        scores = scorer(terms, self.index, self.params)
        return make_run(query_id, zip(self.index.doc_ids, scores.tolist()), k, self.tag)


class DenseRetriever:
    """Exact cosine retrieval over unit-normalized embeddings.

    With a query_instruction, the instruction is prepended to the query text
    before embedding (the LLM-retriever mode).
    """

    def __init__(
        self,
        kb: KnowledgeBase,
        index: DenseIndex | None = None,
        embedder: Embedder | None = None,
        query_instruction: str | None = None,
        tag: str | None = None,
    ):
        if embedder is None:
            raise ValueError("an embedder is required")
        self.kb = kb
        self.embedder = embedder
        self.index = index if index is not None else build_dense_index(kb, embedder)
        self.query_instruction = query_instruction
        base = "llm" if query_instruction else "dense"
        self.tag = tag or f"{base}:{self.index.provider_tag}"
        self._doc_ids = tuple(d.id for d in kb.documents)

    def retrieve(self, query: str, k: int, query_id: str = "query") -> RankedRun:
        _check_k(k, len(self._doc_ids))
        text = f"{self.query_instruction}\n{query}" if self.query_instruction else query
        row = np.asarray(self.embedder.embed([text])[0], dtype=np.float64)
        if row.shape[0] != self.index.dim:
            raise ProviderError(f"query embedding dim {row.shape[0]} != index dim {self.index.dim}")
        norm = np.linalg.norm(row)
        if norm == 0:
            raise ProviderError("zero-norm query embedding")
        scores = self.index.vectors @ (row / norm)
        return make_run(query_id, zip(self._doc_ids, scores.tolist()), k, self.tag)


def llm_retriever(
    kb: KnowledgeBase,
    embedder: Embedder,
    instruction: str = DEFAULT_QUERY_INSTRUCTION,
    index: DenseIndex | None = None,
) -> DenseRetriever:
    """Instruction-embedded LLM retrieval: dense search with an instruction-prefixed query."""
    return DenseRetriever(kb, index=index, embedder=embedder, query_instruction=instruction)


def hybrid_retrieve(
    query: str,
    k: int,
    pool_size: int,
    sparse: SparseRetriever,
    dense: DenseRetriever,
    reranker: Reranker,
    query_id: str = "query",
) -> RankedRun:
    """Union the sparse and dense top pools, rerank every pair, return top-k."""
    size = len(sparse.kb.documents)
    _check_k(k, size)
    if pool_size < k:
        raise KOutOfRange(pool_size, size)
    pool_k = min(pool_size, size)
    pooled = list(
        dict.fromkeys(
            sparse.retrieve(query, pool_k, query_id).doc_ids()
            + dense.retrieve(query, pool_k, query_id).doc_ids()
        )
    )
    texts = [sparse.kb.document(doc_id).text for doc_id in pooled]
    scores = reranker.rerank(query, texts)
    tag = f"hybrid:{sparse.tag}+{dense.tag}"
    return make_run(query_id, zip(pooled, scores), k, tag)


class HybridRetriever:
    def __init__(
        self,
        kb: KnowledgeBase,
        embedder: Embedder,
        reranker: Reranker,
        pool_size: int = 10,
        params: BM25Params = BM25Params(),
        dense_index: DenseIndex | None = None,
    ):
        self.sparse = SparseRetriever(kb, variant="bm25plus", params=params)
        self.dense = DenseRetriever(kb, index=dense_index, embedder=embedder)
        self.reranker = reranker
        self.pool_size = pool_size
        self.tag = f"hybrid:{self.sparse.tag}+{self.dense.tag}"

    def retrieve(self, query: str, k: int, query_id: str = "query") -> RankedRun:
        return hybrid_retrieve(query, k, max(self.pool_size, k), self.sparse, self.dense, self.reranker, query_id)


def write_run(runs: Sequence[RankedRun], path: str | Path) -> None:
    """Write runs in TREC format: query_id Q0 doc_id rank score tag."""
    with open(path, "w", encoding="utf-8") as handle:
        for run in runs:
            for rank, (doc_id, score) in enumerate(run.entries, 1):
                handle.write(f"{run.query_id} Q0 {doc_id} {rank} {score!r} {run.retriever_tag}\n")


def read_run(path: str | Path) -> list[RankedRun]:
    """Read a TREC run file back into RankedRun objects (grouped by query)."""
    grouped: dict[str, list[tuple[str, float]]] = {}
    tags: dict[str, str] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"bad run line: {line!r}")
            query_id, _, doc_id, _, score, tag = parts
            if query_id not in grouped:
                grouped[query_id] = []
                order.append(query_id)
            grouped[query_id].append((doc_id, float(score)))
            tags[query_id] = tag
    return [
        make_run(query_id, grouped[query_id], len(grouped[query_id]), tags[query_id]) for query_id in order
    ]
