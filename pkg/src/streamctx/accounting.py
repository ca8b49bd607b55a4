"""Deterministic byte accounting for retained streaming state.

The harness never samples process or GPU memory. Retained bytes are computed
from an explicit cost model (raw-pixel proxy per frame, four bytes per
embedding dimension) so memory curves are exactly reproducible and testable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidConfigError

#: Raw-pixel proxy cost of one retained frame: 3 channels x 448 x 448.
DEFAULT_BYTES_PER_FRAME = 3 * 448 * 448


@dataclass(frozen=True)
class AccountingModel:
    """Cost model mapping retained frames and embeddings to bytes."""

    bytes_per_frame_proxy: int = DEFAULT_BYTES_PER_FRAME
    bytes_per_embedding_dim: int = 4
    fixed_overhead_bytes: int = 0

    def __post_init__(self) -> None:
        if self.bytes_per_frame_proxy <= 0:
            raise InvalidConfigError("bytes_per_frame_proxy must be positive")
        if self.bytes_per_embedding_dim <= 0:
            raise InvalidConfigError("bytes_per_embedding_dim must be positive")
        if self.fixed_overhead_bytes < 0:
            raise InvalidConfigError("fixed_overhead_bytes must be non-negative")

    def frames_bytes(self, n_frames: int) -> int:
        return n_frames * self.bytes_per_frame_proxy

    def embeddings_bytes(self, n_embeddings: int, dim: int) -> int:
        return n_embeddings * dim * self.bytes_per_embedding_dim


DEFAULT_ACCOUNTING = AccountingModel()
