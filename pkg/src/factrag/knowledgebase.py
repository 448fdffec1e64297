"""Gold and silver knowledge bases: construction, evidence filtering, persistence.

Gold KBs index the fact-checking articles themselves (whole or chunked);
the silver KB indexes chunks of external evidence pages cited by those
articles, with the gold articles removed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence
from urllib.parse import urlsplit

from .corpus import ArticleRecord, ChunkingConfig, ClaimRecord, TokenCounter, chunk_text, split_sentences
from .errors import DanglingArticleRef, DuplicateId, EmptyKb, ManifestMismatch

logger = logging.getLogger(__name__)

KB_FORMAT_VERSION = "1"

# Registered domains the evidence filter always drops.
SOCIAL_BLOCKLIST = frozenset(
    {"twitter.com", "x.com", "facebook.com", "instagram.com", "tiktok.com", "reddit.com"}
)


class KbMode(str, Enum):
    GOLD_ARTICLES = "gold_articles"
    GOLD_CHUNKS = "gold_chunks"
    SILVER_CHUNKS = "silver_chunks"

    @property
    def chunked(self) -> bool:
        return self is not KbMode.GOLD_ARTICLES


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    parent_article_id: str | None = None
    ordinal: int | None = None
    source_url: str | None = None


@dataclass(frozen=True)
class KbStats:
    document_count: int
    avg_words_per_source_doc: float
    avg_sentences_per_source_doc: float
    avg_evidence_per_article: float


@dataclass(frozen=True)
class EvidenceRecord:
    """Main text of one external page cited by one fact-checking article."""

    id: str
    article_id: str
    url: str
    text: str


# claim_id -> ids of documents relevant to that claim.
Qrels = dict


@dataclass(frozen=True)
class KnowledgeBase:
    mode: KbMode
    documents: tuple[Document, ...]
    stats: KbStats
    chunking: ChunkingConfig | None = None
    _by_id: dict = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        by_id = {}
        for doc in self.documents:
            if doc.id in by_id:
                raise DuplicateId(doc.id)
            by_id[doc.id] = doc
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.documents)

    def document(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _require_unique_ids(ids: Iterable[str]) -> None:
    seen = set()
    for item_id in ids:
        if item_id in seen:
            raise DuplicateId(item_id)
        seen.add(item_id)


def build_gold_kb(
    articles: Sequence[ArticleRecord],
    claims: Sequence[ClaimRecord],
    mode: KbMode = KbMode.GOLD_ARTICLES,
    config: ChunkingConfig = ChunkingConfig(),
) -> tuple[KnowledgeBase, Qrels]:
    """Index the gold articles whole or chunked, with claim-level relevance.

    In article mode each claim has exactly one relevant document (its own
    article); in chunk mode every chunk of that article is relevant.
    """
    if not articles:
        raise EmptyKb("no articles to index")
    if mode is KbMode.SILVER_CHUNKS:
        raise ValueError("use build_silver_kb for silver mode")
    _require_unique_ids(a.id for a in articles)

    documents: list[Document] = []
    article_docs: dict[str, list[str]] = {}
    if mode is KbMode.GOLD_ARTICLES:
        for article in articles:
            documents.append(Document(id=article.id, text=article.text))
            article_docs[article.id] = [article.id]
    else:
        for article in articles:
            ids = []
            for chunk in chunk_text(article.text, article.id, config):
                documents.append(
                    Document(
                        id=chunk.id,
                        text=chunk.text,
                        parent_article_id=article.id,
                        ordinal=chunk.ordinal,
                    )
                )
                ids.append(chunk.id)
            article_docs[article.id] = ids

    qrels: Qrels = {}
    for claim in claims:
        if claim.article_id not in article_docs:
            raise DanglingArticleRef(claim.article_id)
        qrels[claim.id] = set(article_docs[claim.article_id])

    stats = KbStats(
        document_count=len(documents),
        avg_words_per_source_doc=_mean([len(a.text.split()) for a in articles]),
        avg_sentences_per_source_doc=_mean([len(split_sentences(a.text)) for a in articles]),
        avg_evidence_per_article=_mean([len(a.evidence_urls) for a in articles]),
    )
    kb = KnowledgeBase(
        mode=mode,
        documents=tuple(documents),
        stats=stats,
        chunking=config if mode.chunked else None,
    )
    return kb, qrels


def _registered_domain_blocked(host: str) -> bool:
    host = host.lower().rstrip(".")
    if ":" in host:
        host = host.split(":", 1)[0]
    for domain in SOCIAL_BLOCKLIST:
        if host == domain or host.endswith("." + domain):
            return True
    return False


def extract_evidence_urls(article: ArticleRecord) -> list[str]:
    """Evidence urls worth fetching: social platforms and claim sources removed.

    Unparsable urls are logged and skipped; order of the survivors is
    preserved and duplicates keep their first occurrence.
    """
    claim_sources = set(article.claim_source_urls)
    kept: list[str] = []
    seen: set[str] = set()
    for url in article.evidence_urls:
        try:
            parts = urlsplit(url)
        except ValueError:
            logger.warning("skipping unparsable url %r in article %s", url, article.id)
            continue
        if not parts.scheme or not parts.netloc:
            logger.warning("skipping unparsable url %r in article %s", url, article.id)
            continue
        if _registered_domain_blocked(parts.netloc):
            continue
        if url in claim_sources:
            continue
        if url in seen:
            continue
        seen.add(url)
        kept.append(url)
    return kept


_BLOCK_TAGS = frozenset(
    {"p", "div", "li", "h1", "h2", "h3", "h4", "h5", "h6", "blockquote", "article", "section", "td", "pre"}
)
_SKIP_TAGS = frozenset({"script", "style", "nav", "header", "footer", "aside", "noscript", "svg", "form", "template"})
_VOID_TAGS = frozenset({"br", "hr", "img", "meta", "link", "input", "area", "base", "col", "embed", "source", "track", "wbr"})


class _BlockCollector(HTMLParser):
    """Accumulates (text, raw_length) per block-level element, skipping chrome."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.blocks: list[tuple[str, int]] = []
        self._text: list[str] = []
        self._raw_len = 0
        self._skip_depth = 0

    def _flush(self):
        text = " ".join("".join(self._text).split())
        if text:
            self.blocks.append((text, max(self._raw_len, len(text))))
        self._text = []
        self._raw_len = 0

    def handle_starttag(self, tag, attrs):
        raw = self.get_starttag_text() or ""
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        if tag in _BLOCK_TAGS:
            self._flush()
        self._raw_len += len(raw)

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if self._skip_depth:
            return
        if tag in _BLOCK_TAGS:
            self._flush()
        elif tag not in _VOID_TAGS:
            self._raw_len += len(tag) + 3

    def handle_data(self, data):
        if self._skip_depth:
            return
        self._text.append(data)
        self._raw_len += len(data)

    def close(self):
        super().close()
        self._flush()


def extract_main_text(html: str) -> str:
    """Paragraph-density main-text extraction.

    Keeps the contiguous run of block elements whose text/markup ratio
    exceeds 0.5, choosing the run with the most text among those containing
    at least two sentences. Returns "" when no run qualifies.
    """
    parser = _BlockCollector()
    try:
        parser.feed(html)
        parser.close()
    except Exception:
        return ""
    dense = [len(text) / raw > 0.5 for text, raw in parser.blocks]
    runs: list[tuple[int, int]] = []
    start = None
    for i, keep in enumerate(dense):
        if keep and start is None:
            start = i
        elif not keep and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(dense)))
    best = ""
    best_len = 0
    for lo, hi in runs:
        text = "\n\n".join(t for t, _ in parser.blocks[lo:hi])
        if len(split_sentences(text)) >= 2 and len(text) > best_len:
            best, best_len = text, len(text)
    return best


@dataclass(frozen=True)
class FetchFailure:
    url: str
    article_id: str
    cause: str


def fetch_evidence(
    sources: Sequence[tuple[str, str]],
    fetcher: Callable[[str], str],
    extractor: Callable[[str], str] = extract_main_text,
    max_workers: int = 4,
    politeness_delay: float = 0.0,
) -> tuple[list[EvidenceRecord], list[FetchFailure]]:
    """Fetch (article_id, url) pairs and extract their main text.

    Unreachable or empty pages become FetchFailure entries instead of
    records; one EvidenceRecord is kept per (article_id, url) pair.
    """
    deduped: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for article_id, url in sources:
        key = (article_id, url)
        if key not in seen:
            seen.add(key)
            deduped.append(key)

    host_locks: dict[str, threading.Lock] = {}
    host_last: dict[str, float] = {}
    state_lock = threading.Lock()

    def polite_fetch(url: str) -> str:
        if politeness_delay <= 0:
            return fetcher(url)
        host = urlsplit(url).netloc
        with state_lock:
            lock = host_locks.setdefault(host, threading.Lock())
        with lock:
            wait = politeness_delay - (time.monotonic() - host_last.get(host, 0.0))
            if wait > 0:
                time.sleep(wait)
            try:
                return fetcher(url)
            finally:
                host_last[host] = time.monotonic()

    def job(pair: tuple[str, str]):
        article_id, url = pair
        try:
            html = polite_fetch(url)
        except Exception as exc:
            return FetchFailure(url=url, article_id=article_id, cause=str(exc))
        text = extractor(html)
        if not text.strip():
            return FetchFailure(url=url, article_id=article_id, cause="no main text extracted")
        return (article_id, url, text)

    if deduped:
        with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
            outcomes = list(pool.map(job, deduped))
    else:
        outcomes = []

    records: list[EvidenceRecord] = []
    failures: list[FetchFailure] = []
    counters: dict[str, int] = {}
    for outcome in outcomes:
        if isinstance(outcome, FetchFailure):
            failures.append(outcome)
            continue
        article_id, url, text = outcome
        n = counters.get(article_id, 0)
        counters[article_id] = n + 1
        records.append(EvidenceRecord(id=f"{article_id}-ev{n}", article_id=article_id, url=url, text=text))
    return records, failures


def build_silver_kb(
    evidence: Sequence[EvidenceRecord],
    claims: Sequence[ClaimRecord],
    config: ChunkingConfig = ChunkingConfig(),
) -> tuple[KnowledgeBase, Qrels]:
    """Chunk external evidence into a KB; relevance is gold-article lineage.

    A chunk is relevant to a claim when it descends from evidence cited by
    the claim's own fact-checking article.
    """
    if not evidence:
        raise EmptyKb("no evidence records")
    _require_unique_ids(e.id for e in evidence)

    documents: list[Document] = []
    by_article: dict[str, list[str]] = {}
    for record in evidence:
        for chunk in chunk_text(record.text, record.id, config):
            documents.append(
                Document(
                    id=chunk.id,
                    text=chunk.text,
                    parent_article_id=record.article_id,
                    ordinal=chunk.ordinal,
                    source_url=record.url,
                )
            )
            by_article.setdefault(record.article_id, []).append(chunk.id)

    qrels: Qrels = {claim.id: set(by_article.get(claim.article_id, ())) for claim in claims}

    article_ids = {e.article_id for e in evidence}
    stats = KbStats(
        document_count=len(documents),
        avg_words_per_source_doc=_mean([len(e.text.split()) for e in evidence]),
        avg_sentences_per_source_doc=_mean([len(split_sentences(e.text)) for e in evidence]),
        avg_evidence_per_article=len(evidence) / len(article_ids) if article_ids else 0.0,
    )
    kb = KnowledgeBase(mode=KbMode.SILVER_CHUNKS, documents=tuple(documents), stats=stats, chunking=config)
    return kb, qrels


def _doc_to_obj(doc: Document) -> dict:
    obj = {"id": doc.id, "text": doc.text}
    if doc.parent_article_id is not None:
        obj["parent_article_id"] = doc.parent_article_id
    if doc.ordinal is not None:
        obj["ordinal"] = doc.ordinal
    if doc.source_url is not None:
        obj["source_url"] = doc.source_url
    return obj


def save_kb(kb: KnowledgeBase, directory: str | Path) -> Path:
    """Persist a KB as kb.json (manifest) + kb.docs.jsonl (documents)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    docs_path = directory / "kb.docs.jsonl"
    lines = [json.dumps(_doc_to_obj(d), sort_keys=True, ensure_ascii=False) for d in kb.documents]
    payload = ("\n".join(lines) + "\n") if lines else ""
    docs_path.write_text(payload, encoding="utf-8")
    manifest = {
        "format_version": KB_FORMAT_VERSION,
        "mode": kb.mode.value,
        "chunking": (
            {
                "max_chunk_tokens": kb.chunking.max_chunk_tokens,
                "token_counter": kb.chunking.token_counter.value,
            }
            if kb.chunking
            else None
        ),
        "doc_count": len(kb.documents),
        "sha256": hashlib.sha256(payload.encode("utf-8")).hexdigest(),
        "stats": {
            "document_count": kb.stats.document_count,
            "avg_words_per_source_doc": kb.stats.avg_words_per_source_doc,
            "avg_sentences_per_source_doc": kb.stats.avg_sentences_per_source_doc,
            "avg_evidence_per_article": kb.stats.avg_evidence_per_article,
        },
    }
    (directory / "kb.json").write_text(
        json.dumps(manifest, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return directory


def load_kb(directory: str | Path) -> KnowledgeBase:
    """Load a persisted KB, verifying the manifest hash and document count."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "kb.json").read_text(encoding="utf-8"))
        payload = (directory / "kb.docs.jsonl").read_text(encoding="utf-8")
    except (OSError, ValueError) as exc:
        raise ManifestMismatch(f"unreadable kb at {directory}: {exc}") from exc
    if manifest.get("format_version") != KB_FORMAT_VERSION:
        raise ManifestMismatch(f"unsupported kb format {manifest.get('format_version')!r}")
    if hashlib.sha256(payload.encode("utf-8")).hexdigest() != manifest.get("sha256"):
        raise ManifestMismatch("document file does not match manifest hash")
    documents = []
    for line in payload.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        documents.append(
            Document(
                id=obj["id"],
                text=obj["text"],
                parent_article_id=obj.get("parent_article_id"),
                ordinal=obj.get("ordinal"),
                source_url=obj.get("source_url"),
            )
        )
    if len(documents) != manifest.get("doc_count"):
        raise ManifestMismatch(f"expected {manifest.get('doc_count')} documents, found {len(documents)}")
    stats_obj = manifest.get("stats", {})
    stats = KbStats(
        document_count=stats_obj.get("document_count", len(documents)),
        avg_words_per_source_doc=stats_obj.get("avg_words_per_source_doc", 0.0),
        avg_sentences_per_source_doc=stats_obj.get("avg_sentences_per_source_doc", 0.0),
        avg_evidence_per_article=stats_obj.get("avg_evidence_per_article", 0.0),
    )
    chunking_obj = manifest.get("chunking")
    chunking = (
        ChunkingConfig(
            max_chunk_tokens=chunking_obj["max_chunk_tokens"],
            token_counter=TokenCounter(chunking_obj.get("token_counter", "whitespace")),
        )
        if chunking_obj
        else None
    )
    return KnowledgeBase(mode=KbMode(manifest["mode"]), documents=tuple(documents), stats=stats, chunking=chunking)


def save_evidence(records: Sequence[EvidenceRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(
                    {"id": record.id, "article_id": record.article_id, "url": record.url, "text": record.text},
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_evidence(path: str | Path) -> list[EvidenceRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                EvidenceRecord(id=obj["id"], article_id=obj["article_id"], url=obj["url"], text=obj["text"])
            )
    return records


def validate_qrels(qrels: Mapping[str, set], kb: KnowledgeBase) -> None:
    """Every judged document id must exist in the target KB."""
    for claim_id, doc_ids in qrels.items():
        for doc_id in doc_ids:
            if doc_id not in kb:
                raise ManifestMismatch(f"qrels for {claim_id} reference unknown document {doc_id}")
