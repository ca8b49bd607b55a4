"""Causal frame timelines: fixed-rate sampling and visible-prefix queries.

A video is modeled as an immutable grid of frame references sampled at a
fixed rate, anchored at t=0 (frame 0 is shown at the stream start). All
downstream policies consume the *visible prefix*: the frames whose
timestamps do not exceed the query time. Frames are references, never
decoded pixels; payload resolution happens only at backend dispatch.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ResolutionError

#: Tolerance on the unit-norm invariant of attached frame embeddings.
EMBEDDING_NORM_TOL = 1e-6

#: Slack when comparing float timestamps against the declared duration.
_DURATION_TOL = 1e-9


@dataclass(frozen=True)
class FrameRef:
    """One sampled frame: grid position plus a payload locator.

    ``source`` is a file path or opaque handle; it is resolved lazily so the
    core stays media-library-free. ``embedding``, when attached, must be
    unit-norm.
    """

    index: int
    timestamp_s: float
    source: str
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.index < 0:
            raise InvalidInputError(f"frame index must be non-negative, got {self.index}")
        if self.timestamp_s < 0:
            raise InvalidInputError(f"frame timestamp must be non-negative, got {self.timestamp_s}")
        if self.embedding is not None:
            norm = float(np.linalg.norm(np.asarray(self.embedding, dtype=np.float64)))
            if abs(norm - 1.0) > EMBEDDING_NORM_TOL:
                raise InvalidInputError(f"frame embedding must be unit-norm, got norm {norm!r}")


@dataclass(frozen=True)
class StreamTimeline:
    """A causally revealed video: ordered frames on a fixed-rate grid.

    Immutable after construction; safe for concurrent reads from multiple
    evaluation workers.
    """

    video_id: str
    duration_s: float
    fps: float
    frames: tuple[FrameRef, ...]
    _timestamps: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise InvalidConfigError(f"fps must be positive, got {self.fps}")
        if self.duration_s < 0:
            raise InvalidInputError(f"duration must be non-negative, got {self.duration_s}")
        expected = math.floor(self.duration_s * self.fps) + 1
        if len(self.frames) != expected:
            raise InvalidInputError(
                f"timeline {self.video_id!r} has {len(self.frames)} frames, "
                f"expected floor(duration*fps)+1 = {expected}"
            )
        ts = tuple(f.timestamp_s for f in self.frames)
        for i in range(1, len(ts)):
            if ts[i] <= ts[i - 1] or self.frames[i].index <= self.frames[i - 1].index:
                raise InvalidInputError(f"timeline {self.video_id!r} frames not strictly increasing at {i}")
        if ts and ts[-1] > self.duration_s + _DURATION_TOL:
            raise InvalidInputError(
                f"timeline {self.video_id!r} has frame at t={ts[-1]} beyond duration {self.duration_s}"
            )
        object.__setattr__(self, "_timestamps", ts)

    def __len__(self) -> int:
        return len(self.frames)


def sample_timeline(
    video_id: str,
    duration_s: float,
    fps: float = 1.0,
    source_pattern: str = "{video_id}:{index}",
) -> StreamTimeline:
    """Sample a fixed-rate timeline with frames at k/fps for k = 0..floor(duration*fps).

    Deterministic: identical inputs yield identical timelines.
    """
    if fps <= 0:
        raise InvalidConfigError(f"fps must be positive, got {fps}")
    if duration_s < 0:
        raise InvalidInputError(f"duration must be non-negative, got {duration_s}")
    count = math.floor(duration_s * fps) + 1
    frames = tuple(
        FrameRef(
            index=k,
            timestamp_s=k / fps,
            source=source_pattern.format(video_id=video_id, index=k),
        )
        for k in range(count)
    )
    return StreamTimeline(video_id=video_id, duration_s=duration_s, fps=fps, frames=frames)


def visible_prefix(timeline: StreamTimeline, t_query: float) -> tuple[FrameRef, ...]:
    """Frames observable at ``t_query``: exactly those with timestamp <= t_query.

    The boundary is inclusive: a frame shown at the query time has been
    observed.
    """
    if t_query < 0:
        raise InvalidInputError(f"query time must be non-negative, got {t_query}")
    cut = bisect.bisect_right(timeline._timestamps, t_query)
    return timeline.frames[:cut]


def resolve_frame(frame: FrameRef, mode: str = "bytes") -> bytes | str:
    """Resolve a frame reference to its payload.

    ``bytes`` mode reads the locator as a file path; ``ref`` mode passes the
    locator through unchanged for wire transmission.
    """
    if mode == "ref":
        return frame.source
    if mode != "bytes":
        raise InvalidConfigError(f"unknown resolve mode {mode!r}")
    path = Path(frame.source)
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ResolutionError(f"cannot resolve frame source {frame.source!r}: {exc}") from exc


def timeline_to_manifest(timeline: StreamTimeline) -> dict[str, Any]:
    return {
        "video_id": timeline.video_id,
        "duration_s": timeline.duration_s,
        "fps": timeline.fps,
        "frames": [
            {"index": f.index, "t": f.timestamp_s, "source": f.source} for f in timeline.frames
        ],
    }


def save_manifest(timeline: StreamTimeline, path: str | Path) -> None:
    """Write the timeline manifest (JSON) so external tools can supply real frames."""
    payload = json.dumps(timeline_to_manifest(timeline), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def load_manifest(path: str | Path) -> StreamTimeline:
    """Load a timeline manifest produced by this harness or any external extractor."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read timeline manifest {path}: {exc}") from exc
    try:
        frames = tuple(
            FrameRef(index=int(f["index"]), timestamp_s=float(f["t"]), source=str(f["source"]))
            for f in raw["frames"]
        )
        return StreamTimeline(
            video_id=str(raw["video_id"]),
            duration_s=float(raw["duration_s"]),
            fps=float(raw["fps"]),
            frames=frames,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed timeline manifest {path}: {exc}") from exc
