"""Retrieval metrics (hit_rate/MRR/MAP at k) and generation metrics.

Retrieval metrics are pure-Python arithmetic so results are bit-stable and
trivially checkable against brute-force re-computation. ROUGE-LSum is
implemented natively; faithfulness/consistency/similarity come from a
pluggable scoring provider and are simply omitted when none is configured.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from .corpus import split_sentences
from .errors import AlignmentError, MissingQrels
from .providers import ScoreKind, Scorer, validate_scores
from .retrieval import RankedRun, tokenize


@dataclass(frozen=True)
class RetrievalReport:
    metric: str
    k: int
    per_query: dict
    mean: float


def _finish_report(metric: str, k: int, per_query: dict) -> RetrievalReport:
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return RetrievalReport(metric=metric, k=k, per_query=per_query, mean=mean)


def _relevant_for(run: RankedRun, qrels: Mapping[str, set]) -> set:
    if run.query_id not in qrels:
        raise MissingQrels(run.query_id)
    return qrels[run.query_id]


def hit_rate_at_k(runs: Sequence[RankedRun], qrels: Mapping[str, set], k: int) -> RetrievalReport:
    """1 if any of the top-k documents is relevant, else 0; mean over queries."""
    per_query = {}
    for run in runs:
        relevant = _relevant_for(run, qrels)
        hit = any(doc_id in relevant for doc_id, _ in run.entries[:k])
        per_query[run.query_id] = 1.0 if hit else 0.0
    return _finish_report("hit_rate", k, per_query)


def mrr_at_k(runs: Sequence[RankedRun], qrels: Mapping[str, set], k: int) -> RetrievalReport:
    """Reciprocal rank of the first relevant document within top-k, else 0."""
    per_query = {}
    for run in runs:
        relevant = _relevant_for(run, qrels)
        value = 0.0
        for rank, (doc_id, _) in enumerate(run.entries[:k], 1):
            if doc_id in relevant:
                value = 1.0 / rank
                break
        per_query[run.query_id] = value
    return _finish_report("mrr", k, per_query)


def map_at_k(runs: Sequence[RankedRun], qrels: Mapping[str, set], k: int) -> RetrievalReport:
    """Average precision at k, normalized by min(|relevant|, k); mean over queries."""
    per_query = {}
    for run in runs:
        relevant = _relevant_for(run, qrels)
        hits = 0
        precision_sum = 0.0
        for rank, (doc_id, _) in enumerate(run.entries[:k], 1):
            if doc_id in relevant:
                hits += 1
                precision_sum += hits / rank
        denominator = min(len(relevant), k)
        per_query[run.query_id] = precision_sum / denominator if denominator else 0.0
    return _finish_report("map", k, per_query)


class RougeScore(NamedTuple):
    precision: float
    recall: float
    f1: float


def _lcs_hit_positions(reference: list[str], candidate: list[str]) -> set[int]:
    """Reference indices on the canonical LCS path.

    Convention: on a token match take the diagonal; otherwise move toward
    the larger subproblem, preferring to drop a candidate token on ties.
    """
    rows, cols = len(reference), len(candidate)
    table = [[0] * (cols + 1) for _ in range(rows + 1)]
    for i in range(1, rows + 1):
        row, prev = table[i], table[i - 1]
        ref_token = reference[i - 1]
        for j in range(1, cols + 1):
            if ref_token == candidate[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                up, left = prev[j], row[j - 1]
                row[j] = up if up >= left else left
    positions = set()
    i, j = rows, cols
    while i > 0 and j > 0:
        if reference[i - 1] == candidate[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif table[i][j - 1] > table[i - 1][j]:
            j -= 1
        else:
            i -= 1
    return positions


def rouge_lsum(candidate: str, reference: str) -> RougeScore:
    """Summary-level ROUGE-L with union-LCS over sentences.

    Per reference sentence, the union of canonical LCS matches against every
    candidate sentence is counted, crediting each candidate token at most
    once across the whole union. Lowercased alphanumeric tokens, no stemming.
    """
    reference_sents = [tokenize(s.text) for s in split_sentences(reference)]
    candidate_sents = [tokenize(s.text) for s in split_sentences(candidate)]
    reference_sents = [s for s in reference_sents if s]
    candidate_sents = [s for s in candidate_sents if s]
    total_ref = sum(len(s) for s in reference_sents)
    total_cand = sum(len(s) for s in candidate_sents)
    if total_ref == 0 or total_cand == 0:
        return RougeScore(0.0, 0.0, 0.0)

    cand_budget: dict[str, int] = {}
    for sent in candidate_sents:
        for token in sent:
            cand_budget[token] = cand_budget.get(token, 0) + 1
    ref_budget: dict[str, int] = {}
    for sent in reference_sents:
        for token in sent:
            ref_budget[token] = ref_budget.get(token, 0) + 1

    hits = 0
    for ref_sent in reference_sents:
        union: set[int] = set()
        for cand_sent in candidate_sents:
            union |= _lcs_hit_positions(ref_sent, cand_sent)
        for position in sorted(union):
            token = ref_sent[position]
            if cand_budget.get(token, 0) > 0 and ref_budget.get(token, 0) > 0:
                hits += 1
                cand_budget[token] -= 1
                ref_budget[token] -= 1

    precision = hits / total_cand
    recall = hits / total_ref
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RougeScore(precision, recall, f1)


@dataclass(frozen=True)
class GenerationReport:
    rouge_lsum_f: float
    faithfulness: float | None
    consistency: float | None
    gold_similarity: float | None
    per_item: tuple


def evaluate_generation(
    verdicts: Sequence[str],
    contexts: Sequence[str],
    gold_verdicts: Sequence[str],
    scorer: Scorer | None = None,
) -> GenerationReport:
    """Score verdicts against their context (adherence) and gold verdicts.

    Provider-backed metrics are skipped, never fabricated, when no scorer is
    configured.
    """
    if not (len(verdicts) == len(contexts) == len(gold_verdicts)):
        raise AlignmentError(
            f"verdicts({len(verdicts)}), contexts({len(contexts)}), gold({len(gold_verdicts)}) must align"
        )
    if not verdicts:
        raise AlignmentError("nothing to evaluate")

    rouge = [rouge_lsum(v, c) for v, c in zip(verdicts, contexts)]
    per_item = [{"rouge_lsum_f": r.f1, "rouge_lsum_p": r.precision, "rouge_lsum_r": r.recall} for r in rouge]

    faithfulness = consistency = gold_similarity = None
    if scorer is not None:
        faith_scores = scorer.score_pairs(ScoreKind.FAITHFULNESS, list(zip(contexts, verdicts)))
        consist_scores = scorer.score_pairs(ScoreKind.CONSISTENCY, list(zip(contexts, verdicts)))
        validate_scores(ScoreKind.CONSISTENCY, consist_scores)
        gold_scores = scorer.score_pairs(ScoreKind.SIMILARITY, list(zip(gold_verdicts, verdicts)))
        for item, f, c, g in zip(per_item, faith_scores, consist_scores, gold_scores):
            item.update({"faithfulness": f, "consistency": c, "gold_similarity": g})
        faithfulness = sum(faith_scores) / len(faith_scores)
        consistency = sum(consist_scores) / len(consist_scores)
        gold_similarity = sum(gold_scores) / len(gold_scores)

    return GenerationReport(
        rouge_lsum_f=sum(r.f1 for r in rouge) / len(rouge),
        faithfulness=faithfulness,
        consistency=consistency,
        gold_similarity=gold_similarity,
        per_item=tuple(per_item),
    )


def save_qrels(qrels: Mapping[str, set], path: str | Path) -> None:
    """Write qrels as 'query_id 0 doc_id 1' lines, sorted for stable bytes."""
    with open(path, "w", encoding="utf-8") as handle:
        for query_id in sorted(qrels):
            for doc_id in sorted(qrels[query_id]):
                handle.write(f"{query_id} 0 {doc_id} 1\n")


def load_qrels(path: str | Path) -> dict:
    qrels: dict[str, set] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"bad qrels line: {line!r}")
            query_id, _, doc_id, relevance = parts
            qrels.setdefault(query_id, set())
            if int(relevance) > 0:
                qrels[query_id].add(doc_id)
    return qrels


def retrieval_report_to_dict(report: RetrievalReport) -> dict:
    return {
        "metric": report.metric,
        "k": report.k,
        "mean": report.mean,
        "per_query": dict(sorted(report.per_query.items())),
    }


def save_retrieval_reports(reports: Sequence[RetrievalReport], path_json: str | Path) -> None:
    payload = [retrieval_report_to_dict(r) for r in reports]
    Path(path_json).write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def save_retrieval_reports_csv(reports: Sequence[RetrievalReport], path_csv: str | Path) -> None:
    with open(path_csv, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "k", "query_id", "value"])
        for report in reports:
            for query_id in sorted(report.per_query):
                writer.writerow([report.metric, report.k, query_id, report.per_query[query_id]])
            writer.writerow([report.metric, report.k, "__mean__", report.mean])
