"""Command-line front door for the pipeline engine.

Exit codes: 0 success, 1 cell failures during a matrix run, 2 configuration
errors (bad flags, malformed config files, missing provider bindings).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, pipeline
from .corpus import ChunkingConfig, Style, link_corpus, load_articles, load_claims
from .errors import ConfigError, FactragError
from .evaluation import (
    evaluate_generation,
    hit_rate_at_k,
    load_qrels,
    map_at_k,
    mrr_at_k,
    save_qrels,
    save_retrieval_reports,
    save_retrieval_reports_csv,
)
from .harness import (
    ExperimentConfig,
    ProviderBindings,
    ReportLayout,
    RetrieverKind,
    mock_bindings,
    report as render_report,
)
from .knowledgebase import (
    KbMode,
    build_gold_kb,
    build_silver_kb,
    load_evidence,
    load_kb,
    save_kb,
)
from .pipeline import GenSetup, PromptMode, assemble_context, build_prompt, generate_verdict
from .providers import (
    HttpEmbedder,
    HttpGenerator,
    HttpReranker,
    HttpScorer,
    ProviderConfig,
)
from .retrieval import (
    DenseRetriever,
    HybridRetriever,
    SparseRetriever,
    llm_retriever,
    read_run,
    write_run,
)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return json.loads(text)
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _provider_config(obj: dict) -> ProviderConfig:
    return ProviderConfig(
        endpoint_url=obj["endpoint_url"],
        model_name=obj.get("model_name", ""),
        timeout_ms=obj.get("timeout_ms", 30_000),
        max_retries=obj.get("max_retries", 2),
        batch_size=obj.get("batch_size", 16),
        api_key_env_var=obj.get("api_key_env_var", ""),
    )


def _bindings(args, config: dict) -> ProviderBindings:
    if args.mock_providers:
        return mock_bindings()
    providers = config.get("providers", {})
    bindings = ProviderBindings()
    if "embedding" in providers:
        bindings.embedder = HttpEmbedder(_provider_config(providers["embedding"]))
    if "generation" in providers:
        bindings.generator = HttpGenerator(_provider_config(providers["generation"]))
    if "fine_tuned" in providers:
        bindings.fine_tuned_generator = HttpGenerator(_provider_config(providers["fine_tuned"]))
    if "rerank" in providers:
        bindings.reranker = HttpReranker(_provider_config(providers["rerank"]))
    if "scorer" in providers:
        bindings.scorer = HttpScorer(_provider_config(providers["scorer"]))
    exemplar = config.get("exemplar")
    if exemplar:
        bindings.exemplar = pipeline.Exemplar(
            claim=exemplar["claim"], context=exemplar["context"], reply=exemplar["reply"]
        )
    return bindings


def _chunking(args) -> ChunkingConfig:
    return ChunkingConfig(max_chunk_tokens=args.max_chunk_tokens)


def _build_retriever(args, kb, bindings: ProviderBindings):
    kind = RetrieverKind(args.retriever)
    if kind is RetrieverKind.BM25:
        return SparseRetriever(kb, "bm25")
    if kind is RetrieverKind.BM25_PLUS:
        return SparseRetriever(kb, "bm25plus")
    if bindings.embedder is None:
        raise ConfigError(f"retriever {kind.value} needs an embedding provider or --mock-providers")
    if kind is RetrieverKind.DENSE:
        return DenseRetriever(kb, embedder=bindings.embedder)
    if kind is RetrieverKind.LLM:
        return llm_retriever(kb, bindings.embedder, instruction=bindings.query_instruction)
    if bindings.reranker is None:
        raise ConfigError("hybrid retrieval needs a rerank provider or --mock-providers")
    return HybridRetriever(kb, bindings.embedder, bindings.reranker, pool_size=bindings.pool_size)


def cmd_build_kb(args, config) -> int:
    claims = load_claims(args.claims)
    out = Path(args.out_dir)
    if args.mode == "silver_chunks":
        if not args.evidence:
            raise ConfigError("silver mode needs --evidence evidence.jsonl")
        evidence = load_evidence(args.evidence)
        kb, qrels = build_silver_kb(evidence, claims, _chunking(args))
    else:
        articles = load_articles(args.articles)
        kb, qrels = build_gold_kb(articles, claims, KbMode(args.mode), _chunking(args))
    save_kb(kb, out)
    save_qrels(qrels, out / "qrels.txt")
    print(f"built {kb.mode.value} kb: {len(kb.documents)} documents -> {out}")
    return 0


def cmd_extract_facts(args, config) -> int:
    bindings = _bindings(args, config)
    if bindings.generator is None:
        raise ConfigError("fact extraction needs a generation provider or --mock-providers")
    style = Style(args.style) if args.style else None
    claims = load_claims(args.claims, style_filter=style)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as handle:
        for claim in claims:
            if claim.style is Style.NEUTRAL:
                continue
            extracted = pipeline.extract_fact(claim, bindings.generator)
            handle.write(
                json.dumps(
                    {"claim_id": claim.id, "fact": extracted.text, "fallback": extracted.fallback},
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
    print(f"wrote facts -> {out}")
    return 0


def _claims_with_facts(args):
    claims = load_claims(args.claims, style_filter=Style(args.style) if args.style else None)
    if getattr(args, "facts", None):
        facts = {}
        with open(args.facts, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    obj = json.loads(line)
                    facts[obj["claim_id"]] = obj["fact"]
        claims = [
            c if c.id not in facts else type(c)(
                id=c.id,
                style=c.style,
                emotion=c.emotion,
                text=c.text,
                article_id=c.article_id,
                gold_verdict=c.gold_verdict,
                extracted_fact=facts[c.id],
            )
            for c in claims
        ]
    return claims


def cmd_retrieve(args, config) -> int:
    bindings = _bindings(args, config)
    kb = load_kb(args.kb)
    claims = _claims_with_facts(args)
    retriever = _build_retriever(args, kb, bindings)
    k = min(args.k, len(kb.documents))
    runs = []
    for claim in claims:
        query = claim.extracted_fact if (args.use_facts and claim.extracted_fact) else claim.text
        runs.append(retriever.retrieve(query, k, query_id=claim.id))
    write_run(runs, args.out)
    print(f"wrote {len(runs)} ranked lists -> {args.out}")
    return 0


def cmd_eval_retrieval(args, config) -> int:
    runs = read_run(args.run)
    qrels = load_qrels(args.qrels)
    reports = []
    for k in args.k_values:
        reports.append(hit_rate_at_k(runs, qrels, k))
        reports.append(mrr_at_k(runs, qrels, k))
        reports.append(map_at_k(runs, qrels, k))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_retrieval_reports(reports, out / "retrieval_report.json")
    save_retrieval_reports_csv(reports, out / "retrieval_report.csv")
    for report in reports:
        print(f"{report.metric}@{report.k}: {report.mean:.4f}")
    return 0


def cmd_generate(args, config) -> int:
    bindings = _bindings(args, config)
    setup = GenSetup(args.setup)
    generator = bindings.fine_tuned_generator if setup is GenSetup.FINE_TUNED else bindings.generator
    if generator is None:
        raise ConfigError(f"setup {setup.value} has no generation provider; use --config or --mock-providers")
    kb = load_kb(args.kb)
    claims = {c.id: c for c in load_claims(args.claims)}
    runs = read_run(args.run)
    mode = PromptMode.ONE_SHOT if setup is GenSetup.ONE_SHOT else PromptMode.ZERO_SHOT
    with open(args.out, "w", encoding="utf-8") as handle:
        for run in runs:
            claim = claims.get(run.query_id)
            if claim is None:
                continue
            contexts = assemble_context(run, kb)
            prompt = build_prompt(claim.text, contexts, mode, bindings.exemplar)
            verdict = generate_verdict(
                prompt, generator, claim_id=claim.id, setup=setup, kb_mode=kb.mode.value, seed=args.seed
            )
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
    print(f"wrote verdicts -> {args.out}")
    return 0


def cmd_eval_generation(args, config) -> int:
    bindings = _bindings(args, config)
    kb = load_kb(args.kb)
    claims = {c.id: c for c in load_claims(args.claims)}
    runs = {r.query_id: r for r in read_run(args.run)}
    verdicts, contexts, golds = [], [], []
    with open(args.verdicts, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            claim = claims.get(obj["claim_id"])
            run = runs.get(obj["claim_id"])
            if claim is None or run is None:
                continue
            verdicts.append(obj["text"])
            contexts.append(pipeline.CONTEXT_SEPARATOR.join(assemble_context(run, kb)))
            golds.append(claim.gold_verdict)
    report = evaluate_generation(verdicts, contexts, golds, bindings.scorer)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "rouge_lsum_f": report.rouge_lsum_f,
        "faithfulness": report.faithfulness,
        "consistency": report.consistency,
        "gold_similarity": report.gold_similarity,
        "per_item": list(report.per_item),
    }
    (out / "generation_report.json").write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    print(f"rouge_lsum_f: {report.rouge_lsum_f:.4f}")
    return 0


def cmd_build_finetune_data(args, config) -> int:
    bindings = _bindings(args, config)
    if bindings.reranker is None:
        raise ConfigError("the fine-tune builder needs a rerank provider or --mock-providers")
    args.seed = args.seed if args.seed is not None else 0
    claims = load_claims(args.claims)
    articles = load_articles(args.articles)
    mode = KbMode(args.kb_mode)
    kb, _ = build_gold_kb(articles, claims, mode, _chunking(args))
    sampled = pipeline.sample_training_claims(
        claims,
        seed=args.seed,
        n_neutral=args.n_neutral,
        n_smp=args.n_smp,
        n_per_emotion=args.n_per_emotion,
    )
    sparse = SparseRetriever(kb, "bm25")
    examples = pipeline.build_finetune_dataset(
        sampled, articles, kb, bindings.reranker, sparse, n_negatives=args.n_negatives, seed=args.seed
    )
    pipeline.save_finetune_dataset(examples, args.out, seed=args.seed)
    print(f"wrote {len(examples)} training examples -> {args.out}")
    return 0


def cmd_run_matrix(args, config) -> int:
    experiment = config.get("experiment", {})
    paths = config.get("paths", {})
    if not paths.get("claims") or not paths.get("articles"):
        raise ConfigError("run-matrix needs [paths] claims/articles in the config file")
    cfg = ExperimentConfig(
        styles=tuple(Style(s) for s in experiment.get("styles", ["neutral", "smp", "emotional"])),
        fact_extraction=experiment.get("fact_extraction", False),
        retrievers=tuple(RetrieverKind(r) for r in experiment.get("retrievers", ["bm25", "dense"])),
        kb_modes=tuple(KbMode(m) for m in experiment.get("kb_modes", ["gold_articles"])),
        k_values=tuple(experiment.get("k_values", list(range(1, 11)))),
        gen_setups=tuple(GenSetup(g) for g in experiment.get("gen_setups", [])),
        seed=args.seed if args.seed is not None else experiment.get("seed", 0),
        use_facts_in_generation=experiment.get("use_facts_in_generation", False),
    )
    claims = load_claims(paths["claims"])
    articles = load_articles(paths["articles"])
    corpus = link_corpus(claims, articles)
    chunking = ChunkingConfig(max_chunk_tokens=experiment.get("max_chunk_tokens", 100))
    kbs = {}
    for mode in cfg.kb_modes:
        if mode is KbMode.SILVER_CHUNKS:
            if not paths.get("evidence"):
                raise ConfigError("silver_chunks in kb_modes needs [paths] evidence")
            kbs[mode] = build_silver_kb(load_evidence(paths["evidence"]), claims, chunking)
        else:
            kbs[mode] = build_gold_kb(articles, claims, mode, chunking)
    bindings = _bindings(args, config)
    records, failed = harness.run_matrix(
        cfg, corpus, kbs, bindings, args.out_dir, force=args.force, parallel=args.parallel
    )
    render_report(records, ReportLayout(args.layout), Path(args.out_dir) / "tables")
    print(f"ran {len(records)} cells, {len(failed)} failed -> {args.out_dir}")
    return 1 if failed else 0


def cmd_report(args, config) -> int:
    records = harness.load_results(args.results_dir)
    if not records:
        raise ConfigError(f"no results found under {args.results_dir}")
    paths = render_report(records, ReportLayout(args.layout), args.out_dir)
    print(f"wrote {paths['blocks']} table blocks -> {paths['text']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factrag", description=__doc__)
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--mock-providers", action="store_true", help="bind deterministic in-tree mocks")
    parser.add_argument("--out-dir", default="out")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-kb", help="build and persist a knowledge base + qrels")
    p.add_argument("--claims", required=True)
    p.add_argument("--articles")
    p.add_argument("--evidence")
    p.add_argument("--mode", required=True, choices=[m.value for m in KbMode])
    p.add_argument("--max-chunk-tokens", type=int, default=100)
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("extract-facts", help="run the fact-extraction module over noisy claims")
    p.add_argument("--claims", required=True)
    p.add_argument("--style", choices=[s.value for s in Style])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_facts)

    p = sub.add_parser("retrieve", help="produce a TREC run file for a claims file")
    p.add_argument("--kb", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--style", choices=[s.value for s in Style])
    p.add_argument("--facts", help="facts.jsonl from extract-facts")
    p.add_argument("--use-facts", action="store_true")
    p.add_argument("--retriever", required=True, choices=[r.value for r in RetrieverKind])
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval-retrieval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k-values", type=int, nargs="+", default=list(range(1, 11)))
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("generate", help="generate verdicts for a run file")
    p.add_argument("--kb", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--setup", default="zero_shot", choices=[g.value for g in GenSetup])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval-generation", help="score generated verdicts")
    p.add_argument("--kb", required=True)
    p.add_argument("--claims", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--verdicts", required=True)
    p.set_defaults(func=cmd_eval_generation)

    p = sub.add_parser("build-finetune-data", help="emit the fine-tuning JSONL dataset")
    p.add_argument("--claims", required=True)
    p.add_argument("--articles", required=True)
    p.add_argument("--kb-mode", default="gold_chunks", choices=["gold_articles", "gold_chunks"])
    p.add_argument("--max-chunk-tokens", type=int, default=100)
    p.add_argument("--n-negatives", type=int, default=3)
    p.add_argument("--n-neutral", type=int, default=200)
    p.add_argument("--n-smp", type=int, default=200)
    p.add_argument("--n-per-emotion", type=int, default=35)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_finetune_data)

    p = sub.add_parser("run-matrix", help="expand and execute the experiment matrix")
    p.add_argument("--layout", default="per_retriever", choices=[l.value for l in ReportLayout])
    p.add_argument("--force", action="store_true", help="re-run cells even if already persisted")
    p.add_argument("--parallel", type=int, default=1, help="run up to N independent cells concurrently")
    p.set_defaults(func=cmd_run_matrix)

    p = sub.add_parser("report", help="render comparison tables from persisted results")
    p.add_argument("--results-dir", required=True)
    p.add_argument("--layout", default="per_retriever", choices=[l.value for l in ReportLayout])
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(args.config)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FactragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
