"""Deterministic mock providers so the full suite runs with no model access."""

from __future__ import annotations

import hashlib
from typing import Sequence

from .providers import GenerationRequest, GenerationResult, ScoreKind
from .retrieval import tokenize


def _stable_hash(token: str) -> int:
    return int.from_bytes(hashlib.md5(token.encode("utf-8")).digest()[:8], "big")


class HashingEmbedder:
    """Feature-hashed bag of words, L2-normalized. Same text, same vector."""

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.tag = f"mock-hash-{dim}"

    def _embed_one(self, text: str) -> list[float]:
        vector = [0.0] * self.dim
        for token in tokenize(text):
            h = _stable_hash(token)
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            vector[h % self.dim] += sign
        if not any(vector):
            vector[_stable_hash(text) % self.dim] = 1.0
        norm = sum(x * x for x in vector) ** 0.5
        return [x / norm for x in vector]

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        return [self._embed_one(t) for t in texts]


class IdentityEmbedder:
    """Maps text containing a known key to that key's orthonormal basis vector.

    With keys set to document texts, any query that quotes a document lands
    exactly on its vector (cosine 1), which makes retrieval outcomes fully
    controllable in tests. Unknown texts fall back to a hashed basis vector.
    """

    def __init__(self, keys: Sequence[str], dim: int | None = None):
        self.keys = tuple(keys)
        self.dim = dim if dim is not None else max(len(self.keys), 1)
        if self.dim < len(self.keys):
            raise ValueError("dim must cover all keys")
        self._lowered = tuple(k.lower() for k in self.keys)
        self.tag = f"mock-identity-{len(self.keys)}"

    def _embed_one(self, text: str) -> list[float]:
        lowered = text.lower()
        index = None
        for i, key in enumerate(self._lowered):
            if key and key in lowered:
                index = i
                break
        if index is None:
            index = _stable_hash(text) % self.dim
        vector = [0.0] * self.dim
        vector[index] = 1.0
        return vector

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        return [self._embed_one(t) for t in texts]


class EchoGenerator:
    """Replies with a parseable echo of the request: Reply: "ECHO:<first 20 chars>"."""

    tag = "mock-echo"

    def generate(self, request: GenerationRequest) -> GenerationResult:
        reply = f'Reply: "ECHO:{request.user_text[:20]}"'
        tokens = reply.split()
        if len(tokens) > request.max_new_tokens:
            return GenerationResult(
                text=" ".join(tokens[: request.max_new_tokens]), finish_reason="length"
            )
        return GenerationResult(text=reply, finish_reason="stop")


class ScriptedGenerator:
    """Plays back canned outputs in order, repeating the last one when exhausted.

    Stateful by design (a test fixture, not a pure mock): each call consumes
    the next scripted output.
    """

    tag = "mock-scripted"

    def __init__(self, outputs: Sequence[str]):
        if not outputs:
            raise ValueError("outputs must be non-empty")
        self._outputs = list(outputs)
        self._cursor = 0

    def generate(self, request: GenerationRequest) -> GenerationResult:
        text = self._outputs[min(self._cursor, len(self._outputs) - 1)]
        self._cursor += 1
        return GenerationResult(text=text, finish_reason="stop")


class SubstringReranker:
    """Scores 1.0 when the whole query appears in the doc, else scaled token overlap."""

    tag = "mock-substring"

    def rerank(self, query: str, docs: Sequence[str]) -> list[float]:
        if not docs:
            raise ValueError("docs must be non-empty")
        query_lower = query.lower()
        query_tokens = set(tokenize(query))
        scores = []
        for doc in docs:
            if query_lower and query_lower in doc.lower():
                scores.append(1.0)
            else:
                overlap = len(query_tokens & set(tokenize(doc)))
                scores.append(0.5 * overlap / max(1, len(query_tokens)))
        return scores


class OverlapScorer:
    """Jaccard overlap of token sets for every kind; identical pair scores 1.0."""

    tag = "mock-overlap"

    def score_pairs(self, kind: ScoreKind, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if not pairs:
            raise ValueError("pairs must be non-empty")
        ScoreKind(kind)
        scores = []
        for a, b in pairs:
            left, right = set(tokenize(a)), set(tokenize(b))
            union = left | right
            scores.append(len(left & right) / len(union) if union else 1.0)
        return scores
