"""TTFT measurement and deterministic memory curves over stream length.

TTFT is measured dispatch-to-first-byte with a monotonic clock; when a
server reports its own ttft_ms that value wins, and every sample records
which definition produced it. Memory curves build the policy's actual
retained state for each stream length and account its bytes under the
explicit cost model, so curve shapes are exact rather than sampled.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .accounting import DEFAULT_ACCOUNTING, AccountingModel
from .backends import AnswerBackend, BackendRequest
from .context_policies import PolicyConfig
from .errors import BackendError, InvalidConfigError, StreamCtxError
from .retrieval_index import chunk_frames
from .stream_core import sample_timeline

#: Jitter control: repeat each TTFT measurement and report the median.
DEFAULT_REPETITIONS = 5


@dataclass(frozen=True)
class EfficiencySample:
    """One measurement point: stream length vs latency and retained bytes."""

    observed_frames: int
    ttft_ms: float | None
    peak_retained_bytes: int | None
    policy_id: str
    backend_id: str
    ttft_definition: str | None = None

    def __post_init__(self) -> None:
        if self.observed_frames < 0:
            raise InvalidConfigError("observed_frames must be non-negative")
        if self.ttft_ms is not None and self.ttft_ms < 0:
            raise InvalidConfigError("ttft_ms must be non-negative")
        if self.peak_retained_bytes is not None and self.peak_retained_bytes < 0:
            raise InvalidConfigError("peak_retained_bytes must be non-negative")


@dataclass(frozen=True)
class TtftMeasurement:
    median_ms: float
    samples_ms: tuple[float, ...]
    definition: str
    failures: int


def measure_ttft(
    backend: AnswerBackend,
    request: BackendRequest,
    repetitions: int = DEFAULT_REPETITIONS,
) -> TtftMeasurement:
    """Median time from dispatch to first response byte over ``repetitions`` calls.

    For in-process backends the response arrives whole, so first byte and
    completion coincide ("client_call_elapsed"). Wire backends override with
    their own definition. Backend failures are recorded, not raised, unless
    every repetition fails.
    """
    if repetitions < 1:
        raise InvalidConfigError("repetitions must be >= 1")
    samples: list[float] = []
    definition = "client_call_elapsed"
    failures = 0
    for _ in range(repetitions):
        started = time.perf_counter()
        try:
            response = backend.answer(request)
        except BackendError:
            failures += 1
            continue
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if response.ttft_definition is not None and response.ttft_ms is not None:
            samples.append(response.ttft_ms)
            definition = response.ttft_definition
        else:
            samples.append(elapsed_ms)
    if not samples:
        raise BackendError(f"all {repetitions} TTFT probes failed", attempts=repetitions)
    return TtftMeasurement(
        median_ms=statistics.median(samples),
        samples_ms=tuple(samples),
        definition=definition,
        failures=failures,
    )


def memory_curve(
    policy_cfg: PolicyConfig,
    stream_lengths: Sequence[int],
    accounting: AccountingModel = DEFAULT_ACCOUNTING,
    *,
    embed_dim: int | None = None,
    persistent_index: bool = True,
    backend_id: str = "simulated",
) -> list[EfficiencySample]:
    """Peak accounted retained-state bytes after observing L frames, per L.

    Retention per policy: recency keeps only its window; keep_all keeps the
    whole prefix; visual_rag keeps the window plus (when the index persists
    across queries) one embedding per historical chunk. All three retained
    states grow monotonically with L, so the state at L is the peak.
    """
    if list(stream_lengths) != sorted(stream_lengths):
        raise InvalidConfigError("stream lengths must be sorted ascending")
    if policy_cfg.kind == "visual_rag" and persistent_index and embed_dim is None:
        raise InvalidConfigError("visual_rag memory accounting needs embed_dim")
    samples: list[EfficiencySample] = []
    for length in stream_lengths:
        if length < 1:
            raise InvalidConfigError(f"stream length must be >= 1, got {length}")
        # Duration chosen strictly between grid points so float rounding can
        # never change the frame count.
        duration = (length - 0.5) / policy_cfg.fps
        timeline = sample_timeline(f"memsim-{length}", duration, policy_cfg.fps)
        if len(timeline) != length:
            raise StreamCtxError(f"simulated stream has {len(timeline)} frames, wanted {length}")
        frames = timeline.frames
        if policy_cfg.kind == "recency":
            retained_frames = frames[-policy_cfg.n_recent :]
            retained = accounting.frames_bytes(len(retained_frames))
        elif policy_cfg.kind == "keep_all":
            retained = accounting.frames_bytes(len(frames))
        elif policy_cfg.kind == "visual_rag":
            recent = frames[-policy_cfg.n_recent :]
            history = frames[: -policy_cfg.n_recent] if len(frames) > policy_cfg.n_recent else ()
            retained = accounting.frames_bytes(len(recent))
            if persistent_index and history:
                chunks = chunk_frames(history, policy_cfg.chunk_len)
                retained += accounting.embeddings_bytes(len(chunks), embed_dim)
        else:  # unreachable: PolicyConfig validates kinds
            raise InvalidConfigError(f"unknown policy kind {policy_cfg.kind!r}")
        retained += accounting.fixed_overhead_bytes
        samples.append(
            EfficiencySample(
                observed_frames=length,
                ttft_ms=None,
                peak_retained_bytes=retained,
                policy_id=policy_cfg.policy_id,
                backend_id=backend_id,
            )
        )
    return samples


@dataclass(frozen=True)
class EfficiencyReport:
    samples: tuple[EfficiencySample, ...]

    def rows(self) -> list[EfficiencySample]:
        return sorted(
            self.samples, key=lambda s: (s.policy_id, s.backend_id, s.observed_frames)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["policy", "backend", "observed_frames", "ttft_ms", "peak_bytes"])
        for s in self.rows():
            writer.writerow(
                [
                    s.policy_id,
                    s.backend_id,
                    s.observed_frames,
                    "" if s.ttft_ms is None else f"{s.ttft_ms:.3f}",
                    "" if s.peak_retained_bytes is None else s.peak_retained_bytes,
                ]
            )
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = [
            "| policy | backend | frames | ttft_ms | peak_bytes |",
            "|---|---|---|---|---|",
        ]
        for s in self.rows():
            ttft = "--" if s.ttft_ms is None else f"{s.ttft_ms:.1f}"
            peak = "--" if s.peak_retained_bytes is None else str(s.peak_retained_bytes)
            lines.append(
                f"| {s.policy_id} | {s.backend_id} | {s.observed_frames} | {ttft} | {peak} |"
            )
        return "\n".join(lines) + "\n"

    def plot_data(self) -> dict:
        """JSON-able {series: [{policy, backend, points: [[frames, ttft, bytes]]}]}."""
        series: dict[tuple[str, str], list] = {}
        for s in self.rows():
            series.setdefault((s.policy_id, s.backend_id), []).append(
                [s.observed_frames, s.ttft_ms, s.peak_retained_bytes]
            )
        return {
            "series": [
                {"policy": policy, "backend": backend, "points": points}
                for (policy, backend), points in sorted(series.items())
            ]
        }


def efficiency_report(samples: Sequence[EfficiencySample]) -> EfficiencyReport:
    """Group samples for rendering; an empty collection is a hard error so
    callers exit nonzero instead of emitting a vacuous report."""
    if not samples:
        raise StreamCtxError("no efficiency samples")
    return EfficiencyReport(samples=tuple(samples))


def write_plot_data(report: EfficiencyReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.plot_data(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
