"""Exception types shared across the harness."""

from __future__ import annotations


class StreamCtxError(Exception):
    """Base class for all harness errors."""


class InvalidConfigError(StreamCtxError):
    """A configuration value is outside its legal range."""


class InvalidInputError(StreamCtxError):
    """An operation received an argument that violates its preconditions."""


class ResolutionError(StreamCtxError):
    """A frame locator could not be resolved to a payload."""


class IndexBuildError(StreamCtxError):
    """Chunk index construction failed."""


class DegenerateEmbeddingError(IndexBuildError):
    """A chunk's mean embedding has zero norm and cannot be renormalized."""


class NoObservationError(StreamCtxError):
    """No frames are visible at the requested query time."""


class GroundingMissingError(StreamCtxError):
    """The mock backend has no grounding entry for a question."""


class BackendError(StreamCtxError):
    """A backend failed to produce a usable response.

    Carries retry metadata so callers can distinguish transport flakiness
    from contract violations.
    """

    def __init__(self, message: str, *, attempts: int = 1, last_status: int | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status


class ScoringError(StreamCtxError):
    """Responses and benchmark records cannot be reconciled."""


class BenchmarkFormatError(StreamCtxError):
    """A benchmark file failed strict loading; carries itemized findings."""

    def __init__(self, message: str, findings=()):
        super().__init__(message)
        self.findings = list(findings)

    def __str__(self) -> str:
        base = super().__str__()
        if not self.findings:
            return base
        items = "\n".join(f"  - {f}" for f in self.findings)
        return f"{base}\n{items}"
