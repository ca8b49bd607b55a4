"""Bounded working-context construction from a visible prefix.

Three policies cover the design space probed by the harness: a recency
window (the last N frames and nothing else), recency plus retrieval of the
top-k most similar historical chunks, and an unbounded keep-all contrast
used for memory-curve experiments. Policies are pure functions of
(prefix, query, config): they never mutate the timeline and are safe to
evaluate concurrently.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .accounting import DEFAULT_ACCOUNTING, AccountingModel
from .errors import InvalidConfigError, InvalidInputError, NoObservationError
from .retrieval_index import (
    Chunk,
    ChunkIndex,
    FrameEmbedder,
    chunk_frames,
    embed_chunks,
    embed_one_chunk,
    top_k,
)
from .stream_core import FrameRef

#: Stable policy identifiers; part of the config/report API.
POLICY_KINDS = ("recency", "visual_rag", "keep_all")

#: Builds a ChunkIndex over history frames; injected so callers can swap in
#: an incremental cache without changing policy code.
IndexBuilder = Callable[[Sequence[FrameRef], int], ChunkIndex]


@dataclass(frozen=True)
class PolicyConfig:
    """Declarative context policy: which frames survive into the working context."""

    kind: str
    n_recent: int = 4
    k_retrieved: int = 5
    chunk_len: int = 8
    fps: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise InvalidConfigError(f"unknown policy kind {self.kind!r}, expected one of {POLICY_KINDS}")
        if self.kind in ("recency", "visual_rag") and self.n_recent < 1:
            raise InvalidConfigError(f"n_recent must be >= 1 for {self.kind}, got {self.n_recent}")
        if self.k_retrieved < 0:
            raise InvalidConfigError(f"k_retrieved must be >= 0, got {self.k_retrieved}")
        if self.chunk_len < 1:
            raise InvalidConfigError(f"chunk_len must be >= 1, got {self.chunk_len}")
        if self.fps <= 0:
            raise InvalidConfigError(f"fps must be positive, got {self.fps}")

    @property
    def policy_id(self) -> str:
        return self.kind


@dataclass(frozen=True)
class BudgetReport:
    """Exact counts and accounted bytes for one working context."""

    frame_count: int
    retrieved_frame_count: int
    retained_bytes: int


@dataclass(frozen=True)
class ContextBundle:
    """The bounded working context handed to a backend for one query."""

    recent_frames: tuple[FrameRef, ...]
    retrieved_chunks: tuple[Chunk, ...]
    query_time_s: float
    policy_id: str
    budget: BudgetReport

    def __post_init__(self) -> None:
        for frame in self.recent_frames:
            if frame.timestamp_s > self.query_time_s:
                raise InvalidInputError(
                    f"frame at t={frame.timestamp_s} violates causality at query t={self.query_time_s}"
                )
        recent_start = self.recent_frames[0].index if self.recent_frames else None
        for chunk in self.retrieved_chunks:
            if chunk.frames and chunk.frames[-1].timestamp_s > self.query_time_s:
                raise InvalidInputError(
                    f"chunk {chunk.chunk_id} extends past query t={self.query_time_s}"
                )
            if recent_start is not None and chunk.end_index >= recent_start:
                raise InvalidInputError(
                    f"chunk {chunk.chunk_id} overlaps the recent window at index {recent_start}"
                )

    @property
    def total_frames(self) -> int:
        return len(self.recent_frames) + sum(len(c.frames) for c in self.retrieved_chunks)


def _account(frames, chunks, accounting: AccountingModel) -> BudgetReport:
    frame_count = len(frames)
    retrieved_frame_count = sum(len(c.frames) for c in chunks)
    emb_bytes = 0
    for f in frames:
        if f.embedding is not None:
            emb_bytes += accounting.embeddings_bytes(1, int(np.asarray(f.embedding).shape[0]))
    for chunk in chunks:
        for f in chunk.frames:
            if f.embedding is not None:
                emb_bytes += accounting.embeddings_bytes(1, int(np.asarray(f.embedding).shape[0]))
        if chunk.embedding is not None:
            emb_bytes += accounting.embeddings_bytes(1, int(np.asarray(chunk.embedding).shape[0]))
    return BudgetReport(
        frame_count=frame_count,
        retrieved_frame_count=retrieved_frame_count,
        retained_bytes=accounting.frames_bytes(frame_count + retrieved_frame_count)
        + emb_bytes
        + accounting.fixed_overhead_bytes,
    )


def context_budget(bundle: ContextBundle, accounting: AccountingModel = DEFAULT_ACCOUNTING) -> BudgetReport:
    """Account a bundle: frames cost the per-frame proxy, embeddings 4 bytes/dim."""
    return _account(bundle.recent_frames, bundle.retrieved_chunks, accounting)


def _resolve_query_time(prefix: Sequence[FrameRef], t_query: float | None) -> float:
    last = prefix[-1].timestamp_s
    if t_query is None:
        return last
    if t_query < last:
        raise InvalidInputError(f"query time {t_query} precedes the last visible frame at {last}")
    return t_query


def recency_window(
    prefix: Sequence[FrameRef],
    cfg: PolicyConfig,
    *,
    t_query: float | None = None,
    accounting: AccountingModel = DEFAULT_ACCOUNTING,
) -> ContextBundle:
    """Keep only the most recent N visible frames; clamp when fewer are visible."""
    if cfg.kind != "recency":
        raise InvalidConfigError(f"recency_window called with kind {cfg.kind!r}")
    if not prefix:
        raise NoObservationError("no frames are visible at this query time")
    recent = tuple(prefix[-cfg.n_recent :])
    return ContextBundle(
        recent_frames=recent,
        retrieved_chunks=(),
        query_time_s=_resolve_query_time(prefix, t_query),
        policy_id=cfg.policy_id,
        budget=_account(recent, (), accounting),
    )


def visual_rag(
    prefix: Sequence[FrameRef],
    query_embedding: np.ndarray,
    cfg: PolicyConfig,
    index_builder: IndexBuilder,
    *,
    t_query: float | None = None,
    accounting: AccountingModel = DEFAULT_ACCOUNTING,
) -> ContextBundle:
    """Recent window plus the top-k most similar historical chunks.

    History is the visible prefix minus the recent window, so no frame is
    fed twice. When the prefix fits inside the window there is nothing to
    retrieve and the bundle degrades to recency-only (not an error). Total
    frames are bounded by N + k * chunk_len.
    """
    if cfg.kind != "visual_rag":
        raise InvalidConfigError(f"visual_rag called with kind {cfg.kind!r}")
    if not prefix:
        raise NoObservationError("no frames are visible at this query time")
    recent = tuple(prefix[-cfg.n_recent :])
    history = prefix[: -cfg.n_recent] if len(prefix) > cfg.n_recent else ()
    retrieved: tuple[Chunk, ...] = ()
    if history and cfg.k_retrieved > 0:
        index = index_builder(history, cfg.chunk_len)
        retrieved = tuple(top_k(index, query_embedding, cfg.k_retrieved))
    return ContextBundle(
        recent_frames=recent,
        retrieved_chunks=retrieved,
        query_time_s=_resolve_query_time(prefix, t_query),
        policy_id=cfg.policy_id,
        budget=_account(recent, retrieved, accounting),
    )


def keep_all(
    prefix: Sequence[FrameRef],
    cfg: PolicyConfig,
    *,
    t_query: float | None = None,
    accounting: AccountingModel = DEFAULT_ACCOUNTING,
) -> ContextBundle:
    """Retain the entire visible prefix; the linear-memory contrast policy."""
    if cfg.kind != "keep_all":
        raise InvalidConfigError(f"keep_all called with kind {cfg.kind!r}")
    if not prefix:
        raise NoObservationError("no frames are visible at this query time")
    frames = tuple(prefix)
    return ContextBundle(
        recent_frames=frames,
        retrieved_chunks=(),
        query_time_s=_resolve_query_time(prefix, t_query),
        policy_id=cfg.policy_id,
        budget=_account(frames, (), accounting),
    )


def fresh_index_builder(embedder: FrameEmbedder) -> IndexBuilder:
    """Index builder that re-chunks and re-embeds history on every query."""

    def build(history: Sequence[FrameRef], chunk_len: int) -> ChunkIndex:
        return embed_chunks(chunk_frames(history, chunk_len), embedder, chunk_len=chunk_len)

    return build


class IncrementalIndexBuilder:
    """Per-video index cache that only embeds chunks it has not seen.

    History for one video always grows from frame 0, so full chunks at fixed
    boundaries are stable; only the trailing partial chunk is re-embedded.
    Produces indexes equivalent to a fresh rebuild (there is a test for
    that). Writes are serialized; reads of the returned index are safe.
    """

    def __init__(self, embedder: FrameEmbedder):
        self._embedder = embedder
        self._lock = threading.Lock()
        self._full: list[Chunk] = []
        self._chunk_len: int | None = None

    def __call__(self, history: Sequence[FrameRef], chunk_len: int) -> ChunkIndex:
        with self._lock:
            if self._chunk_len is None:
                self._chunk_len = chunk_len
            elif chunk_len != self._chunk_len:
                raise InvalidConfigError("chunk_len changed across calls to a shared index cache")
            if history and history[0].index != 0:
                raise InvalidInputError("incremental cache requires history anchored at frame 0")
            n_full = len(history) // chunk_len
            while len(self._full) < n_full:
                lo = len(self._full) * chunk_len
                group = tuple(history[lo : lo + chunk_len])
                self._full.append(
                    embed_one_chunk(
                        Chunk(
                            chunk_id=len(self._full),
                            start_index=group[0].index,
                            end_index=group[-1].index,
                            frames=group,
                        ),
                        self._embedder,
                    )
                )
            chunks = list(self._full[:n_full])
            tail = tuple(history[n_full * chunk_len :])
            if tail:
                chunks.append(
                    embed_one_chunk(
                        Chunk(
                            chunk_id=n_full,
                            start_index=tail[0].index,
                            end_index=tail[-1].index,
                            frames=tail,
                        ),
                        self._embedder,
                    )
                )
            dim = int(chunks[0].embedding.shape[0])
            return ChunkIndex(
                chunks=tuple(chunks),
                dim=dim,
                embedder_id=self._embedder.embedder_id,
                chunk_len=chunk_len,
            )


def build_context(
    prefix: Sequence[FrameRef],
    cfg: PolicyConfig,
    *,
    query_embedding: np.ndarray | None = None,
    index_builder: IndexBuilder | None = None,
    t_query: float | None = None,
    accounting: AccountingModel = DEFAULT_ACCOUNTING,
) -> ContextBundle:
    """Dispatch to the configured policy."""
    if cfg.kind == "recency":
        return recency_window(prefix, cfg, t_query=t_query, accounting=accounting)
    if cfg.kind == "keep_all":
        return keep_all(prefix, cfg, t_query=t_query, accounting=accounting)
    if query_embedding is None or index_builder is None:
        raise InvalidConfigError("visual_rag requires a query embedding and an index builder")
    return visual_rag(
        prefix, query_embedding, cfg, index_builder, t_query=t_query, accounting=accounting
    )
