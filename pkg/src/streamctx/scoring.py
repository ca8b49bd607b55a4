"""Per-track accuracy, category aggregates, and perception-memory metrics.

Category means are unweighted over tracks, and the overall average is the
mean of the real-time and backward category averages; closure tests against
published per-track fixtures pin this arithmetic. Episodic recall (the mean
of the two event-recall tracks) and the HLD-excluded backward average are
first-class outputs, not prose.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .backends import BackendResponse
from .bench import BACKWARD_TRACKS, BenchmarkSet, REAL_TIME_TRACKS
from .errors import ScoringError

#: The two backward tracks that measure recalling previously observed events.
EPISODIC_TRACKS = ("EPM", "ASI")


@dataclass(frozen=True)
class TrackScores:
    """Accuracy percent (0-100) and question counts per track."""

    accuracy: dict[str, float]
    counts: dict[str, int]

    def __post_init__(self) -> None:
        for track, acc in self.accuracy.items():
            if not (0.0 <= acc <= 100.0):
                raise ScoringError(f"track {track} accuracy {acc} outside [0, 100]")
            if self.counts.get(track, 1) <= 0:
                raise ScoringError(f"track {track} reported with non-positive count")


@dataclass(frozen=True)
class CategoryReport:
    """Category-level aggregates in percent.

    Single-category benchmarks (e.g. a real-time-only suite) leave the absent
    category None; overall_avg then equals the present category's mean instead
    of the two-category midpoint.
    """

    rt_avg: float | None
    bwd_avg: float | None
    overall_avg: float
    er: float | None = None
    bwd_avg_excl_hld: float | None = None


@dataclass(frozen=True)
class TradeoffReport:
    delta_p: float
    delta_m: float
    reference_id: str


@dataclass(frozen=True)
class AblationTable:
    """Per-track deltas between a base run and a variant, plus overall accuracy."""

    per_track: dict[str, float]
    base_values: dict[str, float]
    variant_values: dict[str, float]
    base_overall: float
    variant_overall: float

    @property
    def overall_delta(self) -> float:
        return self.variant_overall - self.base_overall


def from_track_values(values: Mapping[str, float], counts: Mapping[str, int] | None = None) -> TrackScores:
    """Build TrackScores from already-aggregated per-track percentages (fixtures)."""
    acc = {str(k): float(v) for k, v in values.items()}
    return TrackScores(accuracy=acc, counts={k: (counts or {}).get(k, 1) for k in acc})


def track_accuracy(
    responses: Iterable[BackendResponse],
    benchmark: BenchmarkSet,
    missing: str = "wrong",
) -> TrackScores:
    """Exact-match option scoring: correct means chosen_option == gold_option.

    ``missing`` controls unanswered questions: "wrong" scores them as
    incorrect, "strict" fails the run.
    """
    if missing not in ("wrong", "strict"):
        raise ScoringError(f"unknown missing-response policy {missing!r}")
    by_id = benchmark.question_by_id()
    seen: set[str] = set()
    correct: dict[str, int] = {}
    total: dict[str, int] = {}
    for response in responses:
        question = by_id.get(response.query_id)
        if question is None:
            raise ScoringError(f"response for unknown question id {response.query_id!r}")
        if response.query_id in seen:
            raise ScoringError(f"duplicate response for question id {response.query_id!r}")
        seen.add(response.query_id)
        total[question.track] = total.get(question.track, 0) + 1
        if response.chosen_option is not None and response.chosen_option == question.gold_option:
            correct[question.track] = correct.get(question.track, 0) + 1
    unanswered = [q.question_id for q in benchmark.questions if q.question_id not in seen]
    if unanswered:
        if missing == "strict":
            raise ScoringError(f"{len(unanswered)} questions unanswered, e.g. {unanswered[:5]}")
        for qid in unanswered:
            track = by_id[qid].track
            total[track] = total.get(track, 0) + 1
    accuracy = {t: 100.0 * correct.get(t, 0) / total[t] for t in total}
    return TrackScores(accuracy=accuracy, counts=total)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def episodic_recall(scores: TrackScores) -> float:
    """ER: the mean of the EPM and ASI accuracies."""
    missing = [t for t in EPISODIC_TRACKS if t not in scores.accuracy]
    if missing:
        raise ScoringError(f"episodic recall requires tracks {EPISODIC_TRACKS}, missing {missing}")
    return _mean([scores.accuracy[t] for t in EPISODIC_TRACKS])


def category_averages(
    scores: TrackScores,
    category_map: Mapping[str, str],
    strict_ovo: bool = False,
) -> CategoryReport:
    """Unweighted track means per category; overall is their midpoint.

    In strict OVO mode all six real-time and all three backward tracks must
    be present.
    """
    if strict_ovo:
        missing = [t for t in (*REAL_TIME_TRACKS, *BACKWARD_TRACKS) if t not in scores.accuracy]
        if missing:
            raise ScoringError(f"strict OVO scoring requires all nine tracks, missing {missing}")
    unmapped = [t for t in scores.accuracy if t not in category_map]
    if unmapped:
        raise ScoringError(f"tracks {unmapped} missing from the category map")
    rt = [scores.accuracy[t] for t in scores.accuracy if category_map[t] == "real_time"]
    bwd = [scores.accuracy[t] for t in scores.accuracy if category_map[t] == "backward"]
    if not rt and not bwd:
        raise ScoringError("no real_time or backward tracks to aggregate")
    rt_avg = _mean(rt) if rt else None
    bwd_avg = _mean(bwd) if bwd else None
    if rt_avg is not None and bwd_avg is not None:
        overall = (rt_avg + bwd_avg) / 2.0
    else:
        overall = rt_avg if rt_avg is not None else bwd_avg
    er = None
    if all(t in scores.accuracy for t in EPISODIC_TRACKS):
        er = episodic_recall(scores)
    excl = [
        scores.accuracy[t]
        for t in scores.accuracy
        if category_map[t] == "backward" and t != "HLD"
    ]
    bwd_excl = _mean(excl) if "HLD" in scores.accuracy and excl else None
    return CategoryReport(
        rt_avg=rt_avg,
        bwd_avg=bwd_avg,
        overall_avg=overall,
        er=er,
        bwd_avg_excl_hld=bwd_excl,
    )


def delta_p(method: CategoryReport, reference: CategoryReport) -> float:
    """Change in real-time perception: RT(method) - RT(reference)."""
    if method.rt_avg is None or reference.rt_avg is None:
        raise ScoringError("delta_p needs real-time averages on both sides")
    return method.rt_avg - reference.rt_avg


def delta_m(method: TrackScores, reference: TrackScores) -> float:
    """Memory gain: ER(method) - ER(reference), with ER = (EPM + ASI) / 2."""
    return episodic_recall(method) - episodic_recall(reference)


def tradeoff(
    method_scores: TrackScores,
    method_report: CategoryReport,
    reference_scores: TrackScores,
    reference_report: CategoryReport,
    reference_id: str,
) -> TradeoffReport:
    return TradeoffReport(
        delta_p=delta_p(method_report, reference_report),
        delta_m=delta_m(method_scores, reference_scores),
        reference_id=reference_id,
    )


def ablation_delta_table(
    base: TrackScores,
    variant: TrackScores,
    category_map: Mapping[str, str],
) -> AblationTable:
    """Per-track variant-minus-base deltas plus the overall-average shift."""
    if set(base.accuracy) != set(variant.accuracy):
        raise ScoringError(
            f"track sets differ: {sorted(set(base.accuracy) ^ set(variant.accuracy))}"
        )
    per_track = {t: variant.accuracy[t] - base.accuracy[t] for t in base.accuracy}
    base_overall = category_averages(base, category_map).overall_avg
    variant_overall = category_averages(variant, category_map).overall_avg
    return AblationTable(
        per_track=per_track,
        base_values=dict(base.accuracy),
        variant_values=dict(variant.accuracy),
        base_overall=base_overall,
        variant_overall=variant_overall,
    )


def check_closure(
    scores: TrackScores,
    category_map: Mapping[str, str],
    printed_rt: float,
    printed_bwd: float,
    printed_overall: float,
    tol: float = 0.05,
) -> list[str]:
    """Compare recomputed category aggregates against printed table values.

    Returns human-readable mismatch descriptions; a fixture that fails
    closure must be flagged, never silently accepted.
    """
    report = category_averages(scores, category_map)
    if report.rt_avg is None or report.bwd_avg is None:
        raise ScoringError("closure checks need both category averages")
    slack = tol + 1e-9
    problems = []
    if abs(report.rt_avg - printed_rt) > slack:
        problems.append(f"rt_avg recomputes to {report.rt_avg:.4f}, printed {printed_rt}")
    if abs(report.bwd_avg - printed_bwd) > slack:
        problems.append(f"bwd_avg recomputes to {report.bwd_avg:.4f}, printed {printed_bwd}")
    if abs(report.overall_avg - printed_overall) > slack:
        problems.append(f"overall recomputes to {report.overall_avg:.4f}, printed {printed_overall}")
    return problems


# --- results files -----------------------------------------------------------

_SUMMARY_FIELDS = ("rt_avg", "bwd_avg", "overall_avg", "er", "bwd_avg_excl_hld")


def results_payload(
    *,
    run_id: str,
    policy: Mapping[str, object],
    backend: str,
    scores: TrackScores,
    report: CategoryReport,
    trade: TradeoffReport | None = None,
    extra: Mapping[str, object] | None = None,
) -> dict:
    """Results-file content: full precision plus 1-2 dp display renderings."""
    payload: dict = {
        "run_id": run_id,
        "policy": dict(policy),
        "backend": backend,
        "per_track": {t: scores.accuracy[t] for t in sorted(scores.accuracy)},
        "counts": {t: scores.counts[t] for t in sorted(scores.counts)},
        "rt_avg": report.rt_avg,
        "bwd_avg": report.bwd_avg,
        "overall_avg": report.overall_avg,
        "er": report.er,
        "bwd_avg_excl_hld": report.bwd_avg_excl_hld,
        "delta_p": trade.delta_p if trade else None,
        "delta_m": trade.delta_m if trade else None,
        "reference_id": trade.reference_id if trade else None,
    }
    display = {t: f"{scores.accuracy[t]:.1f}" for t in sorted(scores.accuracy)}
    if report.rt_avg is not None:
        display["rt_avg"] = f"{report.rt_avg:.1f}"
    if report.bwd_avg is not None:
        display["bwd_avg"] = f"{report.bwd_avg:.1f}"
    display["overall_avg"] = f"{report.overall_avg:.2f}"
    if report.er is not None:
        display["er"] = f"{report.er:.1f}"
    if report.bwd_avg_excl_hld is not None:
        display["bwd_avg_excl_hld"] = f"{report.bwd_avg_excl_hld:.1f}"
    payload["display"] = display
    if extra:
        payload.update(extra)
    return payload


def write_results_json(payload: Mapping, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_results_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def results_to_csv(payloads: Iterable[Mapping]) -> str:
    payloads = list(payloads)
    tracks = sorted({t for p in payloads for t in p.get("per_track", {})})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run_id", "policy", "backend", *tracks, *_SUMMARY_FIELDS, "delta_p", "delta_m"])
    for p in payloads:
        policy = p.get("policy", {})
        policy_label = policy.get("kind", "?") if isinstance(policy, Mapping) else str(policy)
        row = [p.get("run_id"), policy_label, p.get("backend")]
        row.extend(p.get("per_track", {}).get(t, "") for t in tracks)
        row.extend("" if p.get(f) is None else p.get(f) for f in _SUMMARY_FIELDS)
        row.append("" if p.get("delta_p") is None else p.get("delta_p"))
        row.append("" if p.get("delta_m") is None else p.get("delta_m"))
        writer.writerow(row)
    return buf.getvalue()


def results_to_markdown(payloads: Iterable[Mapping]) -> str:
    payloads = list(payloads)
    tracks = sorted({t for p in payloads for t in p.get("per_track", {})})
    header = ["run", *tracks, "RT", "Bwd", "Overall", "ER"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for p in payloads:
        cells = [str(p.get("run_id"))]
        for t in tracks:
            v = p.get("per_track", {}).get(t)
            cells.append("--" if v is None else f"{v:.1f}")
        for key, digits in (("rt_avg", 1), ("bwd_avg", 1), ("overall_avg", 2)):
            value = p.get(key)
            cells.append("--" if value is None else f"{value:.{digits}f}")
        er = p.get("er")
        cells.append("--" if er is None else f"{er:.1f}")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def ablation_to_markdown(table: AblationTable, base_label: str = "base", variant_label: str = "variant") -> str:
    lines = [
        f"| track | {base_label} | {variant_label} | delta |",
        "|---|---|---|---|",
    ]
    for track in sorted(table.per_track):
        lines.append(
            f"| {track} | {table.base_values[track]:.1f} | {table.variant_values[track]:.1f} "
            f"| {table.per_track[track]:+.1f} |"
        )
    lines.append(
        f"| overall | {table.base_overall:.1f} | {table.variant_overall:.1f} | {table.overall_delta:+.1f} |"
    )
    return "\n".join(lines) + "\n"
