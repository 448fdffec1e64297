"""Independent brute-force oracles the engine is checked against.

Everything here is written from the definitions, without reusing the
engine's index structures or accumulation loops.
"""

from __future__ import annotations

import math
from collections import Counter
from functools import lru_cache


def bm25_oracle(query_terms, docs, k1=1.5, b=0.75, epsilon=0.25):
    """Naive per-term Okapi BM25 over tokenized docs (lists of terms)."""
    n_docs = len(docs)
    lengths = [len(d) for d in docs]
    avgdl = sum(lengths) / n_docs
    vocab = {t for d in docs for t in d}
    df = {t: sum(1 for d in docs if t in d) for t in vocab}
    raw_idf = {t: math.log((n_docs - df[t] + 0.5) / (df[t] + 0.5)) for t in vocab}
    positive = [v for v in raw_idf.values() if v > 0]
    floor = epsilon * (sum(positive) / len(positive)) if positive else 0.0
    idf = {t: (v if v >= 0 else floor) for t, v in raw_idf.items()}
    scores = []
    for doc, dl in zip(docs, lengths):
        counts = Counter(doc)
        score = 0.0
        for term in query_terms:
            if term not in vocab:
                continue
            tf = counts[term]
            if tf == 0:
                continue
            score += idf[term] * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
        scores.append(score)
    return scores


def bm25plus_oracle(query_terms, docs, k1=1.5, b=0.75, delta=1.0):
    """Naive BM25+ with idf = ln((N+1)/df); only tf >= 1 terms contribute."""
    n_docs = len(docs)
    lengths = [len(d) for d in docs]
    avgdl = sum(lengths) / n_docs
    vocab = {t for d in docs for t in d}
    df = {t: sum(1 for d in docs if t in d) for t in vocab}
    idf = {t: math.log((n_docs + 1) / df[t]) for t in vocab}
    scores = []
    for doc, dl in zip(docs, lengths):
        counts = Counter(doc)
        score = 0.0
        for term in query_terms:
            tf = counts.get(term, 0)
            if tf < 1:
                continue
            score += idf[term] * (delta + tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl)))
        scores.append(score)
    return scores


def hit_oracle(ranked_ids, relevant, k):
    return 1.0 if any(doc_id in relevant for doc_id in ranked_ids[:k]) else 0.0


def rr_oracle(ranked_ids, relevant, k):
    for rank, doc_id in enumerate(ranked_ids[:k], 1):
        if doc_id in relevant:
            return 1.0 / rank
    return 0.0


def ap_oracle(ranked_ids, relevant, k):
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(ranked_ids[:k], 1):
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    denominator = min(len(relevant), k)
    return total / denominator if denominator else 0.0


def lcs_positions_oracle(reference, candidate):
    """Reference indices on the canonical LCS path, via memoized recursion.

    Same tie convention as the engine: on a match take the diagonal; else
    drop a candidate token only when that subproblem is strictly larger.
    """
    reference = tuple(reference)
    candidate = tuple(candidate)

    @lru_cache(maxsize=None)
    def length(i, j):
        if i == 0 or j == 0:
            return 0
        if reference[i - 1] == candidate[j - 1]:
            return length(i - 1, j - 1) + 1
        return max(length(i - 1, j), length(i, j - 1))

    positions = set()
    i, j = len(reference), len(candidate)
    while i and j:
        if reference[i - 1] == candidate[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif length(i, j - 1) > length(i - 1, j):
            j -= 1
        else:
            i -= 1
    length.cache_clear()
    return positions


def rouge_lsum_oracle(candidate_sents, reference_sents):
    """Union-LCS summary ROUGE over pre-tokenized sentence lists.

    Returns (precision, recall, f1).
    """
    candidate_sents = [list(s) for s in candidate_sents if s]
    reference_sents = [list(s) for s in reference_sents if s]
    total_cand = sum(len(s) for s in candidate_sents)
    total_ref = sum(len(s) for s in reference_sents)
    if not total_cand or not total_ref:
        return 0.0, 0.0, 0.0
    cand_budget = Counter(t for s in candidate_sents for t in s)
    ref_budget = Counter(t for s in reference_sents for t in s)
    hits = 0
    for ref in reference_sents:
        union = set()
        for cand in candidate_sents:
            union |= lcs_positions_oracle(ref, cand)
        for position in sorted(union):
            token = ref[position]
            if cand_budget[token] > 0 and ref_budget[token] > 0:
                hits += 1
                cand_budget[token] -= 1
                ref_budget[token] -= 1
    precision = hits / total_cand
    recall = hits / total_ref
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def greedy_pack_oracle(sentence_counts, cap):
    """Expected (token_count, oversized) chunk sequence for greedy packing."""
    chunks = []
    current = 0
    for count in sentence_counts:
        if count > cap:
            if current:
                chunks.append((current, False))
                current = 0
            chunks.append((count, True))
        elif current and current + count > cap:
            chunks.append((current, False))
            current = count
        else:
            current += count
    if current:
        chunks.append((current, False))
    return chunks
