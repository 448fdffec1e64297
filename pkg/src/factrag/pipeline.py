"""The steps between retrieval and evaluation: fact extraction, prompt
construction, verdict generation and parsing, and the fine-tuning dataset
builder.

Prompt templates live as versioned text files under templates/ with
{context_str}/{query_str} placeholders and are substituted verbatim.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

from .corpus import ArticleRecord, ClaimRecord, Style
from .errors import EmptyRun, MissingExemplar, NoPositives
from .knowledgebase import KbMode, KnowledgeBase
from .providers import GenerationRequest, Generator, Reranker
from .retrieval import RankedRun, SparseRetriever

CHUNK_CONTEXT_SIZE = 10  # chunk-mode prompts carry up to ten retrieved chunks

# Default decoding parameters for verdict generation; recorded in run metadata.
VERDICT_TEMPERATURE = 0.7
VERDICT_MAX_NEW_TOKENS = 256


class PromptMode(str, Enum):
    ZERO_SHOT = "zero_shot"
    ONE_SHOT = "one_shot"


class GenSetup(str, Enum):
    ZERO_SHOT = "zero_shot"
    ONE_SHOT = "one_shot"
    FINE_TUNED = "fine_tuned"


def _load_template(name: str) -> str:
    return resources.files("factrag").joinpath("templates").joinpath(name).read_text(encoding="utf-8")


ZERO_SHOT_TEMPLATE = _load_template("zero_shot_v1.txt")
ONE_SHOT_TEMPLATE = _load_template("one_shot_v1.txt")
FACT_EXTRACTION_TEMPLATE = _load_template("fact_extraction_v1.txt")

CONTEXT_SEPARATOR = "\n\n"


@dataclass(frozen=True)
class Exemplar:
    claim: str
    context: str
    reply: str


@dataclass(frozen=True)
class PromptSpec:
    mode: PromptMode
    context_texts: tuple
    claim_text: str
    exemplar: Exemplar | None
    rendered: str


@dataclass(frozen=True)
class VerdictRecord:
    claim_id: str
    setup: str
    kb_mode: str
    text: str
    raw_output: str
    provider_tag: str
    parse_fallback: bool = False
    degenerate: bool = False


@dataclass(frozen=True)
class ExtractedFact:
    text: str
    fallback: bool
    raw_output: str


def fact_extraction_prompt(claim_text: str) -> str:
    return FACT_EXTRACTION_TEMPLATE.replace("{claim}", claim_text)


def _strip_wrappers(text: str) -> str:
    text = text.strip()
    while len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    if len(text) >= 2 and text[0] == "[" and text[-1] == "]":
        text = text[1:-1].strip()
    while len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text


_FACT_LINE = re.compile(r"^\s*FACT:(.*)$", re.MULTILINE)


def extract_fact(claim: ClaimRecord, generator: Generator) -> ExtractedFact:
    """Strip noise from an SMP/emotional claim with the one-shot extraction prompt.

    Never fails on unparsable output: the original claim text is returned
    with fallback=True instead.
    """
    if claim.style is Style.NEUTRAL:
        raise ValueError("neutral claims bypass fact extraction")
    prompt = fact_extraction_prompt(claim.text)
    result = generator.generate(
        GenerationRequest(user_text=prompt, max_new_tokens=128, temperature=0.0)
    )
    match = _FACT_LINE.search(result.text)
    if match:
        fact = _strip_wrappers(match.group(1))
        if fact:
            return ExtractedFact(text=fact, fallback=False, raw_output=result.text)
    return ExtractedFact(text=claim.text, fallback=True, raw_output=result.text)


def assemble_context(run: RankedRun, kb: KnowledgeBase, mode: KbMode | None = None) -> list[str]:
    """Top-1 article text in article mode; up to top-10 chunk texts otherwise."""
    if not run.entries:
        raise EmptyRun(f"empty run for query {run.query_id}")
    mode = mode if mode is not None else kb.mode
    take = 1 if mode is KbMode.GOLD_ARTICLES else CHUNK_CONTEXT_SIZE
    return [kb.document(doc_id).text for doc_id, _ in run.entries[:take]]


def build_prompt(
    claim_text: str,
    context_texts: Sequence[str],
    mode: PromptMode = PromptMode.ZERO_SHOT,
    exemplar: Exemplar | None = None,
) -> PromptSpec:
    """Render the instruction template with the context block and claim."""
    context_str = CONTEXT_SEPARATOR.join(context_texts)
    if mode is PromptMode.ONE_SHOT:
        if exemplar is None:
            raise MissingExemplar("one-shot prompting needs an exemplar")
        rendered = (
            ONE_SHOT_TEMPLATE.replace("{example_context_str}", exemplar.context)
            .replace("{example_query_str}", exemplar.claim)
            .replace("{example_reply}", exemplar.reply)
            .replace("{context_str}", context_str)
            .replace("{query_str}", claim_text)
        )
    else:
        rendered = ZERO_SHOT_TEMPLATE.replace("{context_str}", context_str).replace(
            "{query_str}", claim_text
        )
    return PromptSpec(
        mode=mode,
        context_texts=tuple(context_texts),
        claim_text=claim_text,
        exemplar=exemplar,
        rendered=rendered,
    )


_REPLY_MARKER = re.compile(r"Reply:\s*")


def parse_reply(raw_output: str) -> tuple[str, bool, bool]:
    """Returns (text, parse_fallback, degenerate) for a raw model output."""
    match = _REPLY_MARKER.search(raw_output)
    if match:
        text = _strip_wrappers(raw_output[match.end() :])
        if text:
            return text, False, text == "your_reply"
    return raw_output.strip(), True, False


def generate_verdict(
    prompt: PromptSpec,
    generator: Generator,
    claim_id: str = "",
    setup: GenSetup | str = GenSetup.ZERO_SHOT,
    kb_mode: str = "",
    max_new_tokens: int = VERDICT_MAX_NEW_TOKENS,
    temperature: float = VERDICT_TEMPERATURE,
    seed: int | None = None,
) -> VerdictRecord:
    """Generate and parse one verdict; the raw output is always retained."""
    result = generator.generate(
        GenerationRequest(
            user_text=prompt.rendered,
            max_new_tokens=max_new_tokens,
            temperature=temperature,
            seed=seed,
        )
    )
    text, fallback, degenerate = parse_reply(result.text)
    return VerdictRecord(
        claim_id=claim_id,
        setup=GenSetup(setup).value,
        kb_mode=kb_mode,
        text=text,
        raw_output=result.text,
        provider_tag=getattr(generator, "tag", "unknown"),
        parse_fallback=fallback,
        degenerate=degenerate,
    )


class BlockLabel(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class FinetuneExample:
    claim_id: str
    claim_text: str
    context_blocks: tuple  # ((text, BlockLabel), ...) in shuffled order
    gold_reply: str


def build_finetune_dataset(
    claims: Sequence[ClaimRecord],
    articles: Sequence[ArticleRecord],
    kb: KnowledgeBase,
    reranker: Reranker,
    sparse: SparseRetriever,
    n_negatives: int = 3,
    seed: int = 0,
) -> list[FinetuneExample]:
    """Per claim: gold context blocks ranked by the reranker against the gold
    verdict, plus BM25 negatives retrieved with the gold verdict as query.

    Block order is shuffled with a seeded RNG so the dataset is reproducible.
    """
    rng = random.Random(seed)
    examples = []
    size = len(kb.documents)
    for claim in claims:
        if kb.mode is KbMode.GOLD_ARTICLES:
            gold_docs = [d for d in kb.documents if d.id == claim.article_id]
        else:
            gold_docs = [d for d in kb.documents if d.parent_article_id == claim.article_id]
        if not gold_docs:
            raise NoPositives(claim.id)

        if kb.mode is KbMode.GOLD_ARTICLES or len(gold_docs) == 1:
            positives = [d.text for d in gold_docs]
        else:
            scores = reranker.rerank(claim.gold_verdict, [d.text for d in gold_docs])
            ranked = sorted(zip(gold_docs, scores), key=lambda pair: (-pair[1], pair[0].id))
            positives = [d.text for d, _ in ranked]

        gold_ids = {d.id for d in gold_docs}
        negatives: list[str] = []
        if n_negatives > 0:
            run = sparse.retrieve(claim.gold_verdict, min(10, size), query_id=claim.id)
            for doc_id, _ in run.entries:
                if doc_id in gold_ids:
                    continue
                negatives.append(kb.document(doc_id).text)
                if len(negatives) >= n_negatives:
                    break

        blocks = [(t, BlockLabel.POSITIVE) for t in positives] + [
            (t, BlockLabel.NEGATIVE) for t in negatives
        ]
        rng.shuffle(blocks)
        examples.append(
            FinetuneExample(
                claim_id=claim.id,
                claim_text=claim.text,
                context_blocks=tuple(blocks),
                gold_reply=claim.gold_verdict,
            )
        )
    return examples


def save_finetune_dataset(examples: Sequence[FinetuneExample], path: str | Path, seed: int = 0) -> None:
    """Emit JSONL with {prompt, completion, metadata} per training example."""
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            prompt = build_prompt(example.claim_text, [t for t, _ in example.context_blocks])
            obj = {
                "prompt": prompt.rendered,
                "completion": f"Reply: {example.gold_reply}",
                "metadata": {
                    "claim_id": example.claim_id,
                    "labels": [label.value for _, label in example.context_blocks],
                    "seed": seed,
                },
            }
            handle.write(json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n")


def sample_training_claims(
    claims: Sequence[ClaimRecord],
    seed: int = 0,
    n_neutral: int = 200,
    n_smp: int = 200,
    n_per_emotion: int = 35,
) -> list[ClaimRecord]:
    """Seeded per-style subsample used to build comparably sized training sets."""
    rng = random.Random(seed)

    def pick(pool: list[ClaimRecord], n: int) -> list[ClaimRecord]:
        if len(pool) <= n:
            return list(pool)
        return rng.sample(pool, n)

    sampled = []
    sampled += pick([c for c in claims if c.style is Style.NEUTRAL], n_neutral)
    sampled += pick([c for c in claims if c.style is Style.SMP], n_smp)
    emotions = sorted({c.emotion for c in claims if c.style is Style.EMOTIONAL and c.emotion})
    for emotion in emotions:
        sampled += pick([c for c in claims if c.emotion == emotion], n_per_emotion)
    return sampled
