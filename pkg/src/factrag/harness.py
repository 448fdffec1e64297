"""Experiment matrix expansion, cell execution, persistence, and table rendering.

One cell fixes (claim style, fact extraction, retriever, KB mode, generation
setup, seed). Cells persist under results/<config-hash>/ so matrices are
resumable, and under mock providers a rerun reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import shutil
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Corpus, Style
from .errors import CellFailed, ConfigError, EmptyMatrix, FormatVersionMismatch
from .evaluation import (
    GenerationReport,
    RetrievalReport,
    evaluate_generation,
    hit_rate_at_k,
    map_at_k,
    mrr_at_k,
)
from .knowledgebase import KbMode, KnowledgeBase
from .pipeline import (
    CONTEXT_SEPARATOR,
    VERDICT_MAX_NEW_TOKENS,
    VERDICT_TEMPERATURE,
    Exemplar,
    GenSetup,
    PromptMode,
    assemble_context,
    build_prompt,
    extract_fact,
    generate_verdict,
)
from .providers import Embedder, Generator, Reranker, Scorer
from .retrieval import (
    DEFAULT_QUERY_INSTRUCTION,
    DenseIndex,
    DenseRetriever,
    HybridRetriever,
    RankedRun,
    SparseRetriever,
    build_dense_index,
    llm_retriever,
    write_run,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"

_METRICS = {"hit_rate": hit_rate_at_k, "mrr": mrr_at_k, "map": map_at_k}


class RetrieverKind(str, Enum):
    BM25 = "bm25"
    BM25_PLUS = "bm25plus"
    DENSE = "dense"
    HYBRID = "hybrid"
    LLM = "llm"


class ReportLayout(str, Enum):
    PER_RETRIEVER = "per_retriever"
    PER_MODEL = "per_model"
    PER_STYLE = "per_style"


@dataclass(frozen=True)
class ExperimentConfig:
    styles: tuple = (Style.NEUTRAL, Style.SMP, Style.EMOTIONAL)
    fact_extraction: bool = False
    retrievers: tuple = (RetrieverKind.BM25, RetrieverKind.DENSE, RetrieverKind.HYBRID, RetrieverKind.LLM)
    kb_modes: tuple = (KbMode.GOLD_ARTICLES, KbMode.GOLD_CHUNKS)
    k_values: tuple = tuple(range(1, 11))
    gen_setups: tuple = ()
    seed: int = 0
    use_facts_in_generation: bool = False


@dataclass(frozen=True)
class RunCell:
    style: Style
    fact_extraction: bool
    retriever: RetrieverKind
    kb_mode: KbMode
    gen_setup: GenSetup | None
    k_values: tuple
    seed: int
    gen_uses_facts: bool = False

    @property
    def style_variant(self) -> str:
        return f"{self.style.value}_facts" if self.fact_extraction else self.style.value

    def to_dict(self) -> dict:
        return {
            "style": self.style.value,
            "fact_extraction": self.fact_extraction,
            "retriever": self.retriever.value,
            "kb_mode": self.kb_mode.value,
            "gen_setup": self.gen_setup.value if self.gen_setup else None,
            "k_values": list(self.k_values),
            "seed": self.seed,
            "gen_uses_facts": self.gen_uses_facts,
        }


def expand_matrix(cfg: ExperimentConfig) -> list[RunCell]:
    """Cartesian product of the configured axes.

    fact_extraction=True adds extraction variants for non-neutral styles on
    top of the plain cells; extraction never applies to neutral claims.
    """
    if not cfg.styles or not cfg.retrievers or not cfg.kb_modes or not cfg.k_values:
        raise EmptyMatrix("every selection axis must be non-empty")
    extraction_options = (False, True) if cfg.fact_extraction else (False,)
    gen_options: tuple = tuple(cfg.gen_setups) if cfg.gen_setups else (None,)
    cells = []
    for style in cfg.styles:
        for extraction in extraction_options:
            if extraction and style is Style.NEUTRAL:
                continue
            for retriever in cfg.retrievers:
                for kb_mode in cfg.kb_modes:
                    for gen_setup in gen_options:
                        cells.append(
                            RunCell(
                                style=Style(style),
                                fact_extraction=extraction,
                                retriever=RetrieverKind(retriever),
                                kb_mode=KbMode(kb_mode),
                                gen_setup=GenSetup(gen_setup) if gen_setup else None,
                                k_values=tuple(cfg.k_values),
                                seed=cfg.seed,
                                gen_uses_facts=cfg.use_facts_in_generation,
                            )
                        )
    if not cells:
        raise EmptyMatrix("the configured selections expand to zero cells")
    return cells


def full_grid_config(seed: int = 0) -> ExperimentConfig:
    """The retrieval study grid: 3 styles (+2 extraction variants), 4 retriever
    families, both gold KB layouts, k = 1..10."""
    return ExperimentConfig(
        styles=(Style.NEUTRAL, Style.SMP, Style.EMOTIONAL),
        fact_extraction=True,
        retrievers=(RetrieverKind.BM25, RetrieverKind.DENSE, RetrieverKind.HYBRID, RetrieverKind.LLM),
        kb_modes=(KbMode.GOLD_ARTICLES, KbMode.GOLD_CHUNKS),
        k_values=tuple(range(1, 11)),
        gen_setups=(),
        seed=seed,
    )


@dataclass
class ProviderBindings:
    embedder: Embedder | None = None
    generator: Generator | None = None
    reranker: Reranker | None = None
    scorer: Scorer | None = None
    fine_tuned_generator: Generator | None = None
    exemplar: Exemplar | None = None
    query_instruction: str = DEFAULT_QUERY_INSTRUCTION
    pool_size: int = 10

    def tags(self) -> dict:
        return {
            "embedder": getattr(self.embedder, "tag", None),
            "generator": getattr(self.generator, "tag", None),
            "reranker": getattr(self.reranker, "tag", None),
            "scorer": getattr(self.scorer, "tag", None),
            "fine_tuned_generator": getattr(self.fine_tuned_generator, "tag", None),
            "query_instruction": self.query_instruction,
        }


def mock_bindings() -> ProviderBindings:
    """All-mock bindings: the whole pipeline runs offline and deterministically."""
    from .mocks import EchoGenerator, HashingEmbedder, OverlapScorer, SubstringReranker

    return ProviderBindings(
        embedder=HashingEmbedder(),
        generator=EchoGenerator(),
        reranker=SubstringReranker(),
        scorer=OverlapScorer(),
        fine_tuned_generator=EchoGenerator(),
        exemplar=Exemplar(
            claim="The moon is made of cheese.",
            context="The moon is a rocky body; lunar samples show basalt and anorthosite.",
            reply="No, lunar rock samples show the moon is made of basalt and anorthosite, not cheese.",
        ),
    )


@dataclass(frozen=True)
class ResultRecord:
    cell: RunCell
    config_hash: str
    retrieval: dict  # metric -> {k: RetrievalReport}
    generation: GenerationReport | None
    failures: tuple
    provider_tags: dict
    timings: dict
    format_version: str = FORMAT_VERSION
    path: Path | None = None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def cell_config_hash(cell: RunCell, provider_tags: Mapping) -> str:
    payload = {
        "cell": cell.to_dict(),
        "providers": dict(provider_tags),
        "format_version": FORMAT_VERSION,
    }
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]


def _build_retriever(cell: RunCell, kb: KnowledgeBase, providers: ProviderBindings, dense_index: DenseIndex | None):
    kind = cell.retriever
    if kind is RetrieverKind.BM25:
        return SparseRetriever(kb, variant="bm25")
    if kind is RetrieverKind.BM25_PLUS:
        return SparseRetriever(kb, variant="bm25plus")
    if providers.embedder is None:
        raise ConfigError(f"retriever {kind.value} needs an embedding provider")
    if kind is RetrieverKind.DENSE:
        return DenseRetriever(kb, index=dense_index, embedder=providers.embedder)
    if kind is RetrieverKind.LLM:
        return llm_retriever(kb, providers.embedder, instruction=providers.query_instruction, index=dense_index)
    if kind is RetrieverKind.HYBRID:
        if providers.reranker is None:
            raise ConfigError("hybrid retrieval needs a reranking provider")
        return HybridRetriever(
            kb, providers.embedder, providers.reranker, pool_size=providers.pool_size, dense_index=dense_index
        )
    raise ConfigError(f"unknown retriever {kind}")


def _query_for(claim, cell: RunCell, providers: ProviderBindings) -> tuple[str, bool]:
    if not cell.fact_extraction or claim.style is Style.NEUTRAL:
        return claim.text, False
    if claim.extracted_fact:
        return claim.extracted_fact, False
    if providers.generator is None:
        raise ConfigError("fact extraction needs a generation provider")
    extracted = extract_fact(claim, providers.generator)
    return extracted.text, extracted.fallback


def _atomic_write_dir(tmp_dir: Path, final_dir: Path) -> None:
    if final_dir.exists():
        shutil.rmtree(final_dir)
    tmp_dir.replace(final_dir)


def run_cell(
    cell: RunCell,
    corpus: Corpus,
    kbs: Mapping[KbMode, tuple],
    providers: ProviderBindings,
    out_dir: str | Path,
    failure_threshold: float = 0.05,
    force: bool = False,
    dense_cache: dict | None = None,
) -> ResultRecord:
    """Execute retrieve -> evaluate (-> generate -> evaluate) for one cell.

    Artifacts land atomically under <out_dir>/results/<config-hash>/; a cell
    directory that already exists is reused unless force is set. Raises
    CellFailed when more than failure_threshold of the claims error out,
    after persisting the partial results.
    """
    started = time.perf_counter()
    if cell.kb_mode not in kbs:
        raise ConfigError(f"no knowledge base built for mode {cell.kb_mode.value}")
    kb, qrels = kbs[cell.kb_mode]
    claims = corpus.claims_for_style(cell.style)
    if not claims:
        raise ConfigError(f"corpus has no {cell.style.value} claims")

    config_hash = cell_config_hash(cell, providers.tags())
    results_root = Path(out_dir) / "results"
    final_dir = results_root / config_hash
    if final_dir.exists() and not force:
        logger.info("cell %s already complete, skipping", config_hash)
        return _load_result_record(final_dir)

    needs_dense = cell.retriever in (RetrieverKind.DENSE, RetrieverKind.LLM, RetrieverKind.HYBRID)
    dense_index = None
    if needs_dense and providers.embedder is not None:
        cache_key = (cell.kb_mode, getattr(providers.embedder, "tag", ""))
        if dense_cache is not None and cache_key in dense_cache:
            dense_index = dense_cache[cache_key]
        else:
            dense_index = build_dense_index(kb, providers.embedder)
            if dense_cache is not None:
                dense_cache[cache_key] = dense_index
    retriever = _build_retriever(cell, kb, providers, dense_index)
    indexed = time.perf_counter()

    max_k = min(max(cell.k_values), len(kb.documents))
    queries: list[dict] = []
    runs: list[RankedRun] = []
    failures: list[dict] = []
    for claim in claims:
        try:
            query, fallback = _query_for(claim, cell, providers)
            run = retriever.retrieve(query, max_k, query_id=claim.id)
        except ConfigError:
            raise
        except Exception as exc:
            failures.append({"claim_id": claim.id, "stage": "retrieval", "error": str(exc)})
            continue
        queries.append({"claim_id": claim.id, "query": query, "fact_fallback": fallback})
        runs.append(run)
    retrieved = time.perf_counter()

    retrieval_reports: dict = {}
    if runs:
        for metric, fn in _METRICS.items():
            retrieval_reports[metric] = {k: fn(runs, qrels, k) for k in cell.k_values}

    generation_report = None
    verdicts: list = []
    if cell.gen_setup is not None and runs:
        generator = (
            providers.fine_tuned_generator if cell.gen_setup is GenSetup.FINE_TUNED else providers.generator
        )
        if generator is None:
            raise ConfigError(f"generation setup {cell.gen_setup.value} has no model binding")
        prompt_mode = PromptMode.ONE_SHOT if cell.gen_setup is GenSetup.ONE_SHOT else PromptMode.ZERO_SHOT
        by_id = {c.id: c for c in claims}
        query_by_id = {q["claim_id"]: q["query"] for q in queries}
        contexts: list[str] = []
        golds: list[str] = []
        texts: list[str] = []
        for run in runs:
            claim = by_id[run.query_id]
            try:
                context_texts = assemble_context(run, kb)
                claim_text = query_by_id[claim.id] if cell.gen_uses_facts else claim.text
                prompt = build_prompt(claim_text, context_texts, prompt_mode, providers.exemplar)
                verdict = generate_verdict(
                    prompt,
                    generator,
                    claim_id=claim.id,
                    setup=cell.gen_setup,
                    kb_mode=cell.kb_mode.value,
                    seed=cell.seed,
                )
            except ConfigError:
                raise
            except Exception as exc:
                failures.append({"claim_id": claim.id, "stage": "generation", "error": str(exc)})
                continue
            verdicts.append(verdict)
            texts.append(verdict.text)
            contexts.append(CONTEXT_SEPARATOR.join(context_texts))
            golds.append(claim.gold_verdict)
        if texts:
            generation_report = evaluate_generation(texts, contexts, golds, providers.scorer)
    finished = time.perf_counter()

    timings = {
        "index_s": indexed - started,
        "retrieval_s": retrieved - indexed,
        "generation_s": finished - retrieved,
        "total_s": finished - started,
    }
    record = ResultRecord(
        cell=cell,
        config_hash=config_hash,
        retrieval=retrieval_reports,
        generation=generation_report,
        failures=tuple(failures),
        provider_tags=providers.tags(),
        timings=timings,
        path=final_dir,
    )

    results_root.mkdir(parents=True, exist_ok=True)
    tmp_dir = results_root / f".tmp-{config_hash}"
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    tmp_dir.mkdir(parents=True)
    write_run(runs, tmp_dir / "run.trec")
    with open(tmp_dir / "queries.jsonl", "w", encoding="utf-8") as handle:
        for query in queries:
            handle.write(json.dumps(query, sort_keys=True, ensure_ascii=False) + "\n")
    if verdicts:
        with open(tmp_dir / "verdicts.jsonl", "w", encoding="utf-8") as handle:
            for verdict in verdicts:
                handle.write(
                    json.dumps(
                        {
                            "claim_id": verdict.claim_id,
                            "setup": verdict.setup,
                            "kb_mode": verdict.kb_mode,
                            "text": verdict.text,
                            "raw_output": verdict.raw_output,
                            "provider_tag": verdict.provider_tag,
                            "parse_fallback": verdict.parse_fallback,
                            "degenerate": verdict.degenerate,
                        },
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    (tmp_dir / "report.json").write_text(
        json.dumps(_record_payload(record), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    (tmp_dir / "timings.json").write_text(
        json.dumps(timings, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _atomic_write_dir(tmp_dir, final_dir)

    failure_fraction = len(failures) / len(claims)
    if failure_fraction > failure_threshold:
        raise CellFailed(
            f"cell {config_hash}: {len(failures)}/{len(claims)} claims failed", failures
        )
    return record


def _record_payload(record: ResultRecord) -> dict:
    retrieval = {
        metric: {
            str(k): {"mean": report.mean, "per_query": dict(sorted(report.per_query.items()))}
            for k, report in by_k.items()
        }
        for metric, by_k in record.retrieval.items()
    }
    generation = None
    if record.generation is not None:
        generation = {
            "rouge_lsum_f": record.generation.rouge_lsum_f,
            "faithfulness": record.generation.faithfulness,
            "consistency": record.generation.consistency,
            "gold_similarity": record.generation.gold_similarity,
            "decoding": {
                "temperature": VERDICT_TEMPERATURE,
                "max_new_tokens": VERDICT_MAX_NEW_TOKENS,
                "seed": record.cell.seed,
            },
            "per_item": list(record.generation.per_item),
        }
    return {
        "format_version": record.format_version,
        "config_hash": record.config_hash,
        "cell": record.cell.to_dict(),
        "provider_tags": dict(record.provider_tags),
        "retrieval": retrieval,
        "generation": generation,
        "failures": list(record.failures),
    }


def _load_result_record(cell_dir: Path) -> ResultRecord:
    payload = json.loads((cell_dir / "report.json").read_text(encoding="utf-8"))
    if payload.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{cell_dir} has format {payload.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    cell_obj = payload["cell"]
    cell = RunCell(
        style=Style(cell_obj["style"]),
        fact_extraction=cell_obj["fact_extraction"],
        retriever=RetrieverKind(cell_obj["retriever"]),
        kb_mode=KbMode(cell_obj["kb_mode"]),
        gen_setup=GenSetup(cell_obj["gen_setup"]) if cell_obj.get("gen_setup") else None,
        k_values=tuple(cell_obj["k_values"]),
        seed=cell_obj["seed"],
        gen_uses_facts=cell_obj.get("gen_uses_facts", False),
    )
    retrieval = {
        metric: {
            int(k): RetrievalReport(metric=metric, k=int(k), per_query=body["per_query"], mean=body["mean"])
            for k, body in by_k.items()
        }
        for metric, by_k in payload["retrieval"].items()
    }
    generation = None
    if payload.get("generation"):
        g = payload["generation"]
        generation = GenerationReport(
            rouge_lsum_f=g["rouge_lsum_f"],
            faithfulness=g.get("faithfulness"),
            consistency=g.get("consistency"),
            gold_similarity=g.get("gold_similarity"),
            per_item=tuple(g.get("per_item", ())),
        )
    timings = {}
    timings_path = cell_dir / "timings.json"
    if timings_path.exists():
        timings = json.loads(timings_path.read_text(encoding="utf-8"))
    return ResultRecord(
        cell=cell,
        config_hash=payload["config_hash"],
        retrieval=retrieval,
        generation=generation,
        failures=tuple(payload.get("failures", ())),
        provider_tags=payload.get("provider_tags", {}),
        timings=timings,
        format_version=payload["format_version"],
        path=cell_dir,
    )


def load_results(out_dir: str | Path) -> list[ResultRecord]:
    results_root = Path(out_dir) / "results"
    if not results_root.exists():
        return []
    records = []
    for cell_dir in sorted(results_root.iterdir()):
        if cell_dir.is_dir() and (cell_dir / "report.json").exists():
            records.append(_load_result_record(cell_dir))
    return records


def run_matrix(
    cfg: ExperimentConfig,
    corpus: Corpus,
    kbs: Mapping[KbMode, tuple],
    providers: ProviderBindings,
    out_dir: str | Path,
    failure_threshold: float = 0.05,
    force: bool = False,
    parallel: int = 1,
) -> tuple[list[ResultRecord], list[dict]]:
    """Run every cell of the expanded matrix; returns (records, failed_cells).

    Cells execute sequentially by default; parallel > 1 runs independent
    cells concurrently (per-claim provider load stays bounded by the global
    request semaphore). Results come back in matrix order either way.
    """
    cells = expand_matrix(cfg)
    dense_cache: dict = {}

    def execute(cell: RunCell):
        return run_cell(
            cell,
            corpus,
            kbs,
            providers,
            out_dir,
            failure_threshold=failure_threshold,
            force=force,
            dense_cache=dense_cache,
        )

    records: list[ResultRecord] = []
    failed: list[dict] = []
    if parallel <= 1:
        outcomes = []
        for cell in cells:
            try:
                outcomes.append(execute(cell))
            except CellFailed as exc:
                outcomes.append(exc)
    else:
        from concurrent.futures import ThreadPoolExecutor

        # warm the shared dense index cache before fanning out
        if providers.embedder is not None:
            for cell in cells:
                if cell.retriever in (RetrieverKind.DENSE, RetrieverKind.LLM, RetrieverKind.HYBRID):
                    key = (cell.kb_mode, getattr(providers.embedder, "tag", ""))
                    if key not in dense_cache and cell.kb_mode in kbs:
                        dense_cache[key] = build_dense_index(kbs[cell.kb_mode][0], providers.embedder)

        def safe(cell: RunCell):
            try:
                return execute(cell)
            except CellFailed as exc:
                return exc

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            outcomes = list(pool.map(safe, cells))

    for cell, outcome in zip(cells, outcomes):
        if isinstance(outcome, CellFailed):
            logger.error("cell failed: %s", outcome)
            failed.append({"cell": cell.to_dict(), "error": str(outcome)})
        else:
            records.append(outcome)
    return records, failed


_STYLE_ORDER = ["neutral", "smp", "emotional", "smp_facts", "emotional_facts"]
_RETRIEVER_ORDER = [kind.value for kind in RetrieverKind]


def _ordered(values, reference) -> list:
    ranked = [v for v in reference if v in values]
    return ranked + sorted(v for v in values if v not in reference)


def _metric_selection(kb_mode: KbMode, k_values: Sequence[int]) -> list[tuple[str, int]]:
    k_hi = max(k_values)
    k_lo = min(k_values)
    if kb_mode is KbMode.GOLD_ARTICLES:
        return [("hit_rate", k_lo), ("mrr", k_hi)]
    return [("hit_rate", k_hi), ("map", k_hi)]


def _render_block(title: str, rows: list, cols: list, values: dict) -> str:
    width = max([len(c) for c in cols] + [9])
    row_width = max([len(r) for r in rows] + [5])
    lines = [title, "-" * len(title)]
    header = " " * row_width + "".join(f"  {c:>{width}}" for c in cols)
    lines.append(header)
    for row in rows:
        row_values = {c: values.get((row, c)) for c in cols}
        present = [v for v in row_values.values() if v is not None]
        best = max(present) if present else None
        cells = []
        for col in cols:
            value = row_values[col]
            if value is None:
                cells.append(f"  {'-':>{width}}")
            else:
                text = f"*{value:.3f}*" if value == best else f"{value:.3f}"
                cells.append(f"  {text:>{width}}")
        lines.append(f"{row:<{row_width}}" + "".join(cells))
    return "\n".join(lines)


def report(
    results: Sequence[ResultRecord],
    layout: ReportLayout = ReportLayout.PER_RETRIEVER,
    out_dir: str | Path = ".",
) -> dict:
    """Render comparison tables (aligned text + CSV) from cell results.

    Text tables mark the best value per row with *asterisks*. Returns the
    paths of the written files.
    """
    if not results:
        raise ConfigError("no results to report")
    for record in results:
        if record.format_version != FORMAT_VERSION:
            raise FormatVersionMismatch(
                f"record {record.config_hash} has format {record.format_version!r}"
            )

    layout = ReportLayout(layout)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    blocks: list[str] = []
    csv_rows: list[list] = [["kb_mode", "metric", "k", "style", "retriever", "setup", "mean"]]

    retrieval_records = [r for r in results if r.retrieval]
    kb_modes = _ordered({r.cell.kb_mode.value for r in retrieval_records}, [m.value for m in KbMode])
    for kb_mode_value in kb_modes:
        kb_mode = KbMode(kb_mode_value)
        subset = [r for r in retrieval_records if r.cell.kb_mode is kb_mode]
        if not subset:
            continue
        styles = _ordered({r.cell.style_variant for r in subset}, _STYLE_ORDER)
        retrievers = _ordered({r.cell.retriever.value for r in subset}, _RETRIEVER_ORDER)
        for metric, k in _metric_selection(kb_mode, subset[0].cell.k_values):
            values = {}
            for record in subset:
                by_k = record.retrieval.get(metric, {})
                if k in by_k:
                    values[(record.cell.style_variant, record.cell.retriever.value)] = by_k[k].mean
                    csv_rows.append(
                        [
                            kb_mode_value,
                            metric,
                            k,
                            record.cell.style_variant,
                            record.cell.retriever.value,
                            record.cell.gen_setup.value if record.cell.gen_setup else "",
                            by_k[k].mean,
                        ]
                    )
            if not values:
                continue
            title = f"{kb_mode_value} :: {metric}@{k}"
            if layout is ReportLayout.PER_STYLE:
                transposed = {(c, r): v for (r, c), v in values.items()}
                blocks.append(_render_block(title, retrievers, styles, transposed))
            else:
                blocks.append(_render_block(title, styles, retrievers, values))

    generation_records = [r for r in results if r.generation is not None]
    if generation_records:
        gen_metrics = ["rouge_lsum_f", "faithfulness", "consistency", "gold_similarity"]
        values = {}
        rows = set()
        for record in generation_records:
            if layout is ReportLayout.PER_MODEL:
                row = f"{record.provider_tags.get('generator')}:{record.cell.gen_setup.value}"
            else:
                row = f"{record.cell.style_variant}:{record.cell.gen_setup.value}"
            rows.add(row)
            for metric in gen_metrics:
                value = getattr(record.generation, metric)
                if value is None:
                    continue
                key = (row, metric)
                values.setdefault(key, []).append(value)
                csv_rows.append(
                    [
                        record.cell.kb_mode.value,
                        metric,
                        "",
                        record.cell.style_variant,
                        record.cell.retriever.value,
                        record.cell.gen_setup.value,
                        value,
                    ]
                )
        averaged = {key: sum(vals) / len(vals) for key, vals in values.items()}
        blocks.append(_render_block("generation", sorted(rows), gen_metrics, averaged))

    text_path = out_dir / "tables.txt"
    text_path.write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
    csv_path = out_dir / "tables.csv"
    with open(csv_path, "w", encoding="utf-8") as handle:
        for row in csv_rows:
            handle.write(",".join(str(x) for x in row) + "\n")
    return {"text": text_path, "csv": csv_path, "blocks": len(blocks)}


def inject_claim_noise(text: str, n_tokens: int, rng: random.Random) -> str:
    """Append n random junk tokens to a claim; a controllable noise dial for
    degradation studies."""
    if n_tokens <= 0:
        return text
    letters = "abcdefghijklmnopqrstuvwxyz"
    junk = [
        "".join(rng.choice(letters) for _ in range(rng.randint(3, 9))) for _ in range(n_tokens)
    ]
    return f"{text} {' '.join(junk)}"
