"""Claim/article corpus loading, sentence splitting, and sentence-aware chunking."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import DanglingArticleRef, MalformedRecord


class Style(str, Enum):
    NEUTRAL = "neutral"
    SMP = "smp"
    EMOTIONAL = "emotional"


EMOTIONS = ("anger", "disgust", "fear", "happiness", "sadness", "surprise")


class TokenCounter(str, Enum):
    WHITESPACE = "whitespace"
    PROVIDER_TOKENIZER = "provider_tokenizer"


@dataclass(frozen=True)
class ClaimRecord:
    """One claim in one style, linked to its fact-checking article."""

    id: str
    style: Style
    emotion: str | None
    text: str
    article_id: str
    gold_verdict: str
    extracted_fact: str | None = None

    def __post_init__(self):
        if not self.text or self.text.isspace():
            raise ValueError("claim text is empty")
        if self.style is Style.EMOTIONAL:
            if self.emotion not in EMOTIONS:
                raise ValueError(f"emotional claim needs an emotion from {EMOTIONS}")
        elif self.emotion is not None:
            raise ValueError("emotion is only allowed on emotional claims")


@dataclass(frozen=True)
class ArticleRecord:
    """A human-written fact-checking article with its outgoing links."""

    id: str
    title: str
    text: str
    evidence_urls: tuple[str, ...] = ()
    claim_source_urls: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text or self.text.isspace():
            raise ValueError("article text is empty")
        object.__setattr__(self, "evidence_urls", tuple(self.evidence_urls))
        object.__setattr__(self, "claim_source_urls", tuple(self.claim_source_urls))


@dataclass(frozen=True)
class Sentence:
    text: str
    token_count: int


@dataclass(frozen=True)
class Chunk:
    id: str
    parent_article_id: str
    ordinal: int
    text: str
    token_count: int
    oversized: bool = False


@dataclass(frozen=True)
class ChunkingConfig:
    max_chunk_tokens: int = 100
    token_counter: TokenCounter = TokenCounter.WHITESPACE

    def __post_init__(self):
        if self.max_chunk_tokens < 1:
            raise ValueError("max_chunk_tokens must be >= 1")


@dataclass(frozen=True)
class Corpus:
    """Claims and articles with validated cross-references."""

    claims: tuple[ClaimRecord, ...]
    articles: tuple[ArticleRecord, ...]
    articles_by_id: dict[str, ArticleRecord] = field(repr=False, default_factory=dict)

    def claims_for_style(self, style: Style) -> list[ClaimRecord]:
        return [c for c in self.claims if c.style is style]


def link_corpus(claims: Iterable[ClaimRecord], articles: Iterable[ArticleRecord]) -> Corpus:
    """Bundle claims and articles, rejecting claims whose article is missing."""
    articles = tuple(articles)
    by_id = {a.id: a for a in articles}
    claims = tuple(claims)
    for claim in claims:
        if claim.article_id not in by_id:
            raise DanglingArticleRef(claim.article_id)
    return Corpus(claims=claims, articles=articles, articles_by_id=by_id)


def _claim_from_obj(obj: dict) -> ClaimRecord:
    style = Style(obj["style"])
    emotion = obj.get("emotion")
    return ClaimRecord(
        id=str(obj["id"]),
        style=style,
        emotion=emotion,
        text=obj["text"],
        article_id=str(obj["article_id"]),
        gold_verdict=obj["gold_verdict"],
        extracted_fact=obj.get("extracted_fact"),
    )


def _article_from_obj(obj: dict) -> ArticleRecord:
    return ArticleRecord(
        id=str(obj["id"]),
        title=obj.get("title", ""),
        text=obj["text"],
        evidence_urls=tuple(obj.get("evidence_urls", ())),
        claim_source_urls=tuple(obj.get("claim_source_urls", ())),
    )


def _load_jsonl(path: str | Path, build: Callable[[dict], object]) -> list:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(build(obj))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
    return records


def load_claims(path: str | Path, style_filter: Style | None = None) -> list[ClaimRecord]:
    """Load claims.jsonl in file order, validating every record.

    Raises MalformedRecord with the offending 1-based line number; dangling
    article references are only checked later by link_corpus.
    """
    claims = _load_jsonl(path, _claim_from_obj)
    if style_filter is not None:
        claims = [c for c in claims if c.style is style_filter]
    return claims


def load_articles(path: str | Path) -> list[ArticleRecord]:
    """Load articles.jsonl in file order, validating every record."""
    return _load_jsonl(path, _article_from_obj)


# Sentence boundaries: a run of .!? followed by whitespace and an uppercase
# letter, or end of text. Tokens on these lists never terminate a sentence;
# title-style abbreviations match case-sensitively so the word "no." still
# ends a sentence while "No. 10" does not.
_NO_BREAK_CASED = frozenset(
    {"Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "Sr.", "Jr.", "No.", "Vol.", "Fig.",
     "U.S.", "U.K.", "U.N."}
)
_NO_BREAK_ANY_CASE = frozenset({"e.g.", "i.e.", "vs.", "cf.", "a.m.", "p.m."})

_TERMINATOR_RUN = re.compile(r"[.!?]+")


def _is_abbreviation(text: str, run_start: int, run_end: int) -> bool:
    start = run_start
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start:run_end]
    while token and not token[0].isalnum():
        token = token[1:]
    return token in _NO_BREAK_CASED or token.lower() in _NO_BREAK_ANY_CASE


def split_sentences(text: str) -> list[Sentence]:
    """Split text into sentences with whitespace-token counts.

    Internal whitespace is normalized to single spaces; no non-whitespace
    character is dropped or reordered.
    """
    if not text or text.isspace():
        return []
    n = len(text)
    segments: list[str] = []
    start = 0
    for match in _TERMINATOR_RUN.finditer(text):
        end = match.end()
        if end <= start:
            continue
        follow = end
        while follow < n and text[follow].isspace():
            follow += 1
        at_end = follow >= n
        if not at_end:
            if follow == end or not text[follow].isupper():
                continue
            if text[end - 1] == "." and _is_abbreviation(text, match.start(), end):
                continue
        segments.append(text[start:end])
        start = follow
    if start < n and not text[start:].isspace():
        segments.append(text[start:])
    sentences = []
    for segment in segments:
        normalized = " ".join(segment.split())
        if normalized:
            sentences.append(Sentence(text=normalized, token_count=len(normalized.split())))
    return sentences


def _whitespace_count(text: str) -> int:
    return len(text.split())


def chunk_text(
    text: str,
    parent_id: str,
    config: ChunkingConfig = ChunkingConfig(),
    count_tokens: Callable[[str], int] | None = None,
) -> list[Chunk]:
    """Greedily pack whole sentences into chunks of at most max_chunk_tokens.

    A single sentence longer than the budget becomes its own chunk flagged
    oversized; sentences are never split.
    """
    if config.token_counter is TokenCounter.PROVIDER_TOKENIZER:
        if count_tokens is None:
            raise ValueError("provider_tokenizer mode needs a count_tokens callable")
        counter = count_tokens
    else:
        counter = _whitespace_count

    chunks: list[Chunk] = []
    current: list[str] = []
    current_count = 0

    def flush():
        nonlocal current, current_count
        if current:
            body = " ".join(current)
            chunks.append(
                Chunk(
                    id=f"{parent_id}-c{len(chunks)}",
                    parent_article_id=parent_id,
                    ordinal=len(chunks),
                    text=body,
                    token_count=counter(body),
                )
            )
            current = []
            current_count = 0

    exact_sum = counter is _whitespace_count
    for sentence in split_sentences(text):
        sent_count = counter(sentence.text)
        if sent_count > config.max_chunk_tokens:
            flush()
            chunks.append(
                Chunk(
                    id=f"{parent_id}-c{len(chunks)}",
                    parent_article_id=parent_id,
                    ordinal=len(chunks),
                    text=sentence.text,
                    token_count=sent_count,
                    oversized=True,
                )
            )
            continue
        if current:
            if exact_sum:
                candidate = current_count + sent_count
            else:
                candidate = counter(" ".join(current + [sentence.text]))
            if candidate > config.max_chunk_tokens:
                flush()
                candidate = sent_count
        else:
            candidate = sent_count
        current.append(sentence.text)
        current_count = candidate
    flush()
    return chunks


def chunk_document(
    article: ArticleRecord,
    config: ChunkingConfig = ChunkingConfig(),
    count_tokens: Callable[[str], int] | None = None,
) -> list[Chunk]:
    """Chunk one article; chunk ids carry the parent article id and ordinal."""
    return chunk_text(article.text, article.id, config, count_tokens)


def styled_variants(
    neutral_claims: Sequence[ClaimRecord],
    emotions: Sequence[str] = EMOTIONS,
) -> list[ClaimRecord]:
    """Derive aligned SMP and emotional variants from neutral claims.

    Deterministic text rewrites for fixtures and demos; real datasets ship
    their own rewritten styles.
    """
    variants: list[ClaimRecord] = list(neutral_claims)
    for i, claim in enumerate(neutral_claims):
        variants.append(
            ClaimRecord(
                id=f"{claim.id}-smp",
                style=Style.SMP,
                emotion=None,
                text=f"omg have you seen this?? {claim.text} #factcheck #viral",
                article_id=claim.article_id,
                gold_verdict=claim.gold_verdict,
            )
        )
        emotion = emotions[i % len(emotions)]
        variants.append(
            ClaimRecord(
                id=f"{claim.id}-emo",
                style=Style.EMOTIONAL,
                emotion=emotion,
                text=(
                    f"I am overwhelmed with {emotion} right now. {claim.text} "
                    "How is nobody talking about this?! #truth"
                ),
                article_id=claim.article_id,
                gold_verdict=claim.gold_verdict,
            )
        )
    return variants
