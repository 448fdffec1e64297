"""Exception types shared across the package."""

from __future__ import annotations


class FactragError(Exception):
    """Base class for all package errors."""


class MalformedRecord(FactragError):
    """A dataset line violated the expected schema."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DanglingArticleRef(FactragError):
    """A claim points at an article id that is not in the corpus."""

    def __init__(self, article_id: str):
        super().__init__(f"unknown article id: {article_id}")
        self.article_id = article_id


class DuplicateId(FactragError):
    def __init__(self, dup_id: str):
        super().__init__(f"duplicate id: {dup_id}")
        self.dup_id = dup_id


class UnparsableUrl(FactragError):
    def __init__(self, url: str):
        super().__init__(f"unparsable url: {url}")
        self.url = url


class ManifestMismatch(FactragError):
    """Persisted knowledge base disagrees with its manifest."""


class EmptyKb(FactragError):
    pass


class KOutOfRange(FactragError):
    def __init__(self, k: int, size: int):
        super().__init__(f"k={k} outside [1, {size}]")
        self.k = k
        self.size = size


class ProviderError(FactragError):
    """A provider call failed after exhausting retries."""

    def __init__(self, message: str, status: int | None = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body = body


class DimensionMismatch(ProviderError):
    pass


class InvalidScore(ProviderError):
    """A scoring backend returned a value outside its documented range."""


class UnsupportedKind(ProviderError):
    pass


class MissingExemplar(FactragError):
    pass


class NoPositives(FactragError):
    def __init__(self, claim_id: str):
        super().__init__(f"no positive context for claim {claim_id}")
        self.claim_id = claim_id


class EmptyRun(FactragError):
    pass


class MissingQrels(FactragError):
    def __init__(self, query_id: str):
        super().__init__(f"no relevance judgments for query {query_id}")
        self.query_id = query_id


class AlignmentError(FactragError):
    pass


class EmptyMatrix(FactragError):
    pass


class FormatVersionMismatch(FactragError):
    pass


class CellFailed(FactragError):
    """Too many per-claim failures inside one experiment cell."""

    def __init__(self, message: str, failures: list):
        super().__init__(message)
        self.failures = failures


class ConfigError(FactragError):
    pass
