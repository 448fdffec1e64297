"""Uniform clients for embedding, generation, reranking, and external scoring.

Every network call in the package flows through this module. The wire format
is the de-facto open inference-server API (JSON over HTTP): /embeddings,
/chat/completions, /rerank, and a /score extension for pair scorers, all
relative to the configured base url.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Protocol, Sequence, runtime_checkable

from .errors import (
    DimensionMismatch,
    InvalidScore,
    ProviderError,
    UnsupportedKind,
)

# Bounds concurrent in-flight HTTP requests across all clients.
_inflight = threading.BoundedSemaphore(8)
_sleep = time.sleep


def set_max_inflight(n: int) -> None:
    """Resize the global in-flight request bound (call before issuing traffic)."""
    global _inflight
    if n < 1:
        raise ValueError("in-flight bound must be >= 1")
    _inflight = threading.BoundedSemaphore(n)


@dataclass(frozen=True)
class ProviderConfig:
    endpoint_url: str
    model_name: str
    timeout_ms: int = 30_000
    max_retries: int = 2
    batch_size: int = 16
    api_key_env_var: str = ""

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class GenerationRequest:
    user_text: str
    system_text: str | None = None
    max_new_tokens: int = 256
    temperature: float = 0.7
    seed: int | None = None

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    finish_reason: str = "stop"

    @property
    def truncated(self) -> bool:
        return self.finish_reason == "length"


class ScoreKind(str, Enum):
    FAITHFULNESS = "faithfulness"
    CONSISTENCY = "consistency"
    SIMILARITY = "similarity"


@runtime_checkable
class Embedder(Protocol):
    tag: str

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


@runtime_checkable
class Generator(Protocol):
    tag: str

    def generate(self, request: GenerationRequest) -> GenerationResult: ...


@runtime_checkable
class Reranker(Protocol):
    tag: str

    def rerank(self, query: str, docs: Sequence[str]) -> list[float]: ...


@runtime_checkable
class Scorer(Protocol):
    tag: str

    def score_pairs(self, kind: ScoreKind, pairs: Sequence[tuple[str, str]]) -> list[float]: ...


# transport(url, payload, headers, timeout_s) -> (status_code, parsed_body)
Transport = Callable[[str, dict, dict, float], tuple[int, Any]]


def _requests_transport(url: str, payload: dict, headers: dict, timeout_s: float) -> tuple[int, Any]:
    import requests

    response = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
    try:
        body = response.json()
    except ValueError:
        body = response.text
    return response.status_code, body


_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class _HttpClient:
    """Shared POST-with-retries plumbing for the concrete provider clients."""

    def __init__(self, cfg: ProviderConfig, transport: Transport | None = None):
        self.cfg = cfg
        self._transport = transport or _requests_transport

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env_var:
            key = os.environ.get(self.cfg.api_key_env_var, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def post(self, path: str, payload: dict) -> Any:
        url = self.cfg.endpoint_url.rstrip("/") + path
        timeout_s = self.cfg.timeout_ms / 1000.0
        headers = self._headers()
        attempts = self.cfg.max_retries + 1
        last_error: ProviderError | None = None
        for attempt in range(attempts):
            if attempt:
                _sleep(min(4.0, 0.25 * (2 ** (attempt - 1))))
            try:
                with _inflight:
                    status, body = self._transport(url, payload, headers, timeout_s)
            except Exception as exc:
                last_error = ProviderError(f"transport failure for {url}: {exc}")
                continue
            if status == 200:
                return body
            last_error = ProviderError(f"{url} returned {status}", status=status, body=str(body)[:2000])
            if status not in _RETRYABLE_STATUSES:
                break
        assert last_error is not None
        raise last_error


def _batches(items: Sequence, size: int):
    for start in range(0, len(items), size):
        yield items[start : start + size]


class HttpEmbedder:
    def __init__(self, cfg: ProviderConfig, transport: Transport | None = None):
        self._client = _HttpClient(cfg, transport)
        self.cfg = cfg
        self.tag = cfg.model_name

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        vectors: list[list[float]] = []
        for batch in _batches(list(texts), self.cfg.batch_size):
            body = self._client.post("/embeddings", {"model": self.cfg.model_name, "input": list(batch)})
            try:
                data = body["data"]
                data = sorted(data, key=lambda item: item.get("index", 0))
                batch_vectors = [[float(x) for x in item["embedding"]] for item in data]
            except (KeyError, TypeError) as exc:
                raise ProviderError(f"malformed embeddings response: {exc}", body=str(body)[:2000]) from exc
            if len(batch_vectors) != len(batch):
                raise ProviderError(
                    f"expected {len(batch)} embeddings, got {len(batch_vectors)}"
                )
            vectors.extend(batch_vectors)
        dim = len(vectors[0])
        for vector in vectors:
            if len(vector) != dim:
                raise DimensionMismatch(f"embedding dimensions disagree: {len(vector)} vs {dim}")
        return vectors


class HttpGenerator:
    def __init__(self, cfg: ProviderConfig, transport: Transport | None = None):
        self._client = _HttpClient(cfg, transport)
        self.cfg = cfg
        self.tag = cfg.model_name

    def generate(self, request: GenerationRequest) -> GenerationResult:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload: dict[str, Any] = {
            "model": self.cfg.model_name,
            "messages": messages,
            "max_tokens": request.max_new_tokens,
            "temperature": request.temperature,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        body = self._client.post("/chat/completions", payload)
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason") or "stop"
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed generation response: {exc}", body=str(body)[:2000]) from exc
        return GenerationResult(text=text, finish_reason=finish)


class HttpReranker:
    def __init__(self, cfg: ProviderConfig, transport: Transport | None = None):
        self._client = _HttpClient(cfg, transport)
        self.cfg = cfg
        self.tag = cfg.model_name

    def rerank(self, query: str, docs: Sequence[str]) -> list[float]:
        if not docs:
            raise ValueError("docs must be non-empty")
        scores: list[float] = []
        for batch in _batches(list(docs), self.cfg.batch_size):
            body = self._client.post(
                "/rerank", {"model": self.cfg.model_name, "query": query, "documents": list(batch)}
            )
            try:
                results = sorted(body["results"], key=lambda item: item["index"])
                batch_scores = [float(item["relevance_score"]) for item in results]
            except (KeyError, TypeError) as exc:
                raise ProviderError(f"malformed rerank response: {exc}", body=str(body)[:2000]) from exc
            if len(batch_scores) != len(batch):
                raise ProviderError(f"expected {len(batch)} scores, got {len(batch_scores)}")
            scores.extend(batch_scores)
        return scores


class HttpScorer:
    """Adapter to an external pair-scoring service (faithfulness/consistency/similarity)."""

    def __init__(self, cfg: ProviderConfig, transport: Transport | None = None):
        self._client = _HttpClient(cfg, transport)
        self.cfg = cfg
        self.tag = cfg.model_name

    def score_pairs(self, kind: ScoreKind, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if not pairs:
            raise ValueError("pairs must be non-empty")
        scores: list[float] = []
        for batch in _batches(list(pairs), self.cfg.batch_size):
            try:
                body = self._client.post(
                    "/score",
                    {
                        "model": self.cfg.model_name,
                        "kind": ScoreKind(kind).value,
                        "pairs": [[a, b] for a, b in batch],
                    },
                )
            except ProviderError as exc:
                if exc.status == 400 and "unsupported" in exc.body.lower():
                    raise UnsupportedKind(f"scorer lacks kind {kind}", status=exc.status) from exc
                raise
            try:
                batch_scores = [float(x) for x in body["scores"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed score response: {exc}", body=str(body)[:2000]) from exc
            if len(batch_scores) != len(batch):
                raise ProviderError(f"expected {len(batch)} scores, got {len(batch_scores)}")
            scores.extend(batch_scores)
        validate_scores(kind, scores)
        return scores


def validate_scores(kind: ScoreKind, scores: Sequence[float]) -> None:
    """Consistency scores live in [0, 1]; anything outside is a backend bug."""
    if ScoreKind(kind) is ScoreKind.CONSISTENCY:
        for value in scores:
            if not 0.0 <= value <= 1.0:
                raise InvalidScore(f"consistency score {value} outside [0, 1]")


def embed_batch(cfg: ProviderConfig, texts: Sequence[str], transport: Transport | None = None) -> list[list[float]]:
    return HttpEmbedder(cfg, transport).embed(texts)


def generate(cfg: ProviderConfig, request: GenerationRequest, transport: Transport | None = None) -> GenerationResult:
    return HttpGenerator(cfg, transport).generate(request)


def rerank_batch(
    cfg: ProviderConfig, query: str, docs: Sequence[str], transport: Transport | None = None
) -> list[float]:
    return HttpReranker(cfg, transport).rerank(query, docs)


def score_pairs(
    cfg: ProviderConfig,
    kind: ScoreKind,
    pairs: Sequence[tuple[str, str]],
    transport: Transport | None = None,
) -> list[float]:
    return HttpScorer(cfg, transport).score_pairs(kind, pairs)


class PageFetcher:
    """Plain HTTP page fetcher for evidence collection; returns response text."""

    def __init__(self, timeout_ms: int = 20_000, user_agent: str = "factrag/0.1"):
        self.timeout_s = timeout_ms / 1000.0
        self.user_agent = user_agent

    def __call__(self, url: str) -> str:
        import requests

        with _inflight:
            response = requests.get(url, timeout=self.timeout_s, headers={"User-Agent": self.user_agent})
        response.raise_for_status()
        return response.text
