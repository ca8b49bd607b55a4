"""Deterministic embedding providers for desk-scale runs.

Real runs embed frames through the wire protocol (see ``backends``); these
providers exist so retrieval, policies, and the mock backend can be exercised
with fully known ground truth and no model weights.
"""

from __future__ import annotations

import hashlib
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .stream_core import FrameRef, StreamTimeline

if TYPE_CHECKING:
    from .bench import BenchmarkSet


def stable_seed(*parts: object) -> int:
    """64-bit seed derived from SHA-256 of the joined parts; stable across runs."""
    key = "|".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def hash_unit_vector(key: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic unit vector derived from SHA-256 of (seed, key)."""
    if dim < 1:
        raise InvalidConfigError(f"embedding dim must be >= 1, got {dim}")
    rng = np.random.default_rng(stable_seed(seed, key))
    vec = rng.standard_normal(dim)
    norm = float(np.linalg.norm(vec))
    while norm < 1e-12:  # vanishing probability; regenerate rather than divide by ~0
        vec = rng.standard_normal(dim)
        norm = float(np.linalg.norm(vec))
    return vec / norm


class HashEmbedder:
    """Unit vectors hashed from each frame's locator (or reused when attached).

    Two frames with the same source always embed identically; distinct
    sources are near-orthogonal in expectation.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise InvalidConfigError(f"embedding dim must be >= 1, got {dim}")
        self.dim = dim
        self.seed = seed
        self.embedder_id = f"hash-d{dim}-s{seed}"

    def embed_frames(self, frames: Sequence[FrameRef]) -> np.ndarray:
        rows = np.empty((len(frames), self.dim), dtype=np.float64)
        for i, frame in enumerate(frames):
            if frame.embedding is not None:
                emb = np.asarray(frame.embedding, dtype=np.float64)
                if emb.shape != (self.dim,):
                    raise InvalidInputError(
                        f"attached embedding dim {emb.shape} != embedder dim {self.dim}"
                    )
                rows[i] = emb
            else:
                rows[i] = hash_unit_vector(frame.source, self.dim, self.seed)
        return rows

    def embed_text(self, text: str) -> np.ndarray:
        return hash_unit_vector(f"text:{text}", self.dim, self.seed)


class PrecomputedEmbedder:
    """Reads embeddings already attached to frames; refuses frames without one."""

    def __init__(self, dim: int):
        self.dim = dim
        self.embedder_id = f"precomputed-d{dim}"

    def embed_frames(self, frames: Sequence[FrameRef]) -> np.ndarray:
        rows = np.empty((len(frames), self.dim), dtype=np.float64)
        for i, frame in enumerate(frames):
            if frame.embedding is None:
                raise InvalidInputError(f"frame {frame.index} has no attached embedding")
            rows[i] = np.asarray(frame.embedding, dtype=np.float64)
        return rows


class SyntheticEmbedder:
    """Grounding-aware embedder for synthetic benchmarks.

    Each video gets one planted unit vector derived from its id. Frames whose
    timestamps fall inside any of the video's evidence intervals embed as the
    planted vector; every other frame gets an independent hashed vector. The
    query embedding for a question is its video's planted vector, so retrieval
    over history has exact, known ground truth.
    """

    def __init__(self, benchmark: "BenchmarkSet", dim: int = 64, seed: int = 0, cache_size: int = 4):
        if benchmark.grounding is None:
            raise InvalidConfigError("SyntheticEmbedder requires a benchmark with grounding")
        self.dim = dim
        self.seed = seed
        self.embedder_id = f"synthetic-d{dim}-s{seed}"
        self._cache_size = max(1, cache_size)
        self._video_rows: dict[str, np.ndarray] = {}
        self._intervals: dict[str, list[tuple[float, float]]] = {}
        self._video_of_question: dict[str, str] = {}
        for q in benchmark.questions:
            self._video_of_question[q.question_id] = q.video_id
            entry = benchmark.grounding.get(q.question_id)
            if entry is not None:
                self._intervals.setdefault(q.video_id, []).extend(entry.evidence)

    def planted_vector(self, video_id: str) -> np.ndarray:
        return hash_unit_vector(f"plant:{video_id}", self.dim, self.seed)

    def _rows_for(self, video_id: str, n_frames: int, fps: float) -> np.ndarray:
        rows = self._video_rows.get(video_id)
        if rows is None or rows.shape[0] < n_frames:
            rng = np.random.default_rng(stable_seed(self.seed, "video", video_id))
            rows = rng.standard_normal((n_frames, self.dim))
            rows /= np.linalg.norm(rows, axis=1, keepdims=True)
            planted = self.planted_vector(video_id)
            for a, b in self._intervals.get(video_id, ()):
                lo = int(np.ceil(a * fps))
                hi = int(np.floor(b * fps))
                if hi >= 0 and lo < n_frames:
                    rows[max(lo, 0) : hi + 1] = planted
            if len(self._video_rows) >= self._cache_size:
                self._video_rows.pop(next(iter(self._video_rows)))
            self._video_rows[video_id] = rows
        return rows

    def embed_frames(self, frames: Sequence[FrameRef]) -> np.ndarray:
        if not frames:
            return np.empty((0, self.dim), dtype=np.float64)
        video_id, fps = _video_and_fps_of(frames)
        max_index = max(f.index for f in frames)
        rows = self._rows_for(video_id, max_index + 1, fps)
        return rows[[f.index for f in frames]]

    def embed_query(self, question_id: str) -> np.ndarray:
        video_id = self._video_of_question.get(question_id)
        if video_id is None:
            raise InvalidInputError(f"unknown question id {question_id!r}")
        return self.planted_vector(video_id)


def _video_and_fps_of(frames: Sequence[FrameRef]) -> tuple[str, float]:
    # Synthetic sources follow the "{video_id}:{index}" pattern of sample_timeline.
    first = frames[0]
    video_id, _, _ = first.source.rpartition(":")
    if not video_id:
        raise InvalidInputError(f"frame source {first.source!r} carries no video id")
    if first.timestamp_s > 0:
        fps = first.index / first.timestamp_s
    else:
        fps = 1.0 if len(frames) < 2 else (frames[1].index - first.index) / (frames[1].timestamp_s - first.timestamp_s)
    return video_id, fps


def with_frame_embeddings(timeline: StreamTimeline, embedder) -> StreamTimeline:
    """Copy of the timeline with embeddings attached to every frame."""
    rows = embedder.embed_frames(timeline.frames)
    frames = tuple(
        FrameRef(index=f.index, timestamp_s=f.timestamp_s, source=f.source, embedding=rows[i])
        for i, f in enumerate(timeline.frames)
    )
    return StreamTimeline(
        video_id=timeline.video_id,
        duration_s=timeline.duration_s,
        fps=timeline.fps,
        frames=frames,
    )
