"""Benchmark normalization, validation, and synthetic generation.

The native JSON schema is the source of truth; OVO-Bench and StreamingBench
adapters are thin mappers onto it. The synthetic generator plants evidence
at known temporal distances so context policies can be scored against exact,
closed-form ground truth.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .backends import DEFAULT_BETA, GroundingEntry, GroundingMap
from .errors import BenchmarkFormatError, InvalidConfigError

#: OVO-Bench track sets. Real-Time Visual Perception has six tracks,
#: Backward Tracing three; Forward Active Responding is out of scope.
REAL_TIME_TRACKS = ("OCR", "ACR", "ATR", "STU", "FPD", "OJR")
BACKWARD_TRACKS = ("EPM", "ASI", "HLD")
FORWARD_TRACKS = ("REC", "SSR", "CRR")

OVO_CATEGORY_MAP: dict[str, str] = {
    **{t: "real_time" for t in REAL_TIME_TRACKS},
    **{t: "backward" for t in BACKWARD_TRACKS},
}

OVO_EXPECTED_QUESTIONS = 1640
STREAMINGBENCH_EXPECTED_QUESTIONS = 2500

_LETTER_OPTIONS = "ABCDEFGH"


@dataclass(frozen=True)
class QuestionRecord:
    """One normalized benchmark item."""

    question_id: str
    video_id: str
    track: str
    question: str
    options: tuple[str, ...]
    gold_option: int
    query_time_s: float


@dataclass(frozen=True)
class Finding:
    """One validation observation; errors fail strict loading, warnings do not."""

    kind: str
    message: str
    question_id: str | None = None
    severity: str = "error"

    def __str__(self) -> str:
        where = f" [{self.question_id}]" if self.question_id else ""
        return f"{self.severity}:{self.kind}{where}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def clean(self) -> bool:
        return not self.findings


@dataclass(frozen=True)
class BenchmarkSet:
    """A normalized benchmark plus its track-to-category map."""

    name: str
    category_map: dict[str, str]
    questions: tuple[QuestionRecord, ...]
    grounding: GroundingMap | None = None

    def question_by_id(self) -> dict[str, QuestionRecord]:
        return {q.question_id: q for q in self.questions}

    def tracks(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for q in self.questions:
            seen.setdefault(q.track, None)
        return tuple(seen)


def _coerce_gold(value: object, n_options: int) -> int:
    """Accept either an option index or a letter answer ("A".."H")."""
    if isinstance(value, bool):
        raise ValueError(f"gold answer cannot be a boolean: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        text = value.strip().upper()
        if len(text) == 1 and text in _LETTER_OPTIONS[: max(n_options, 1)]:
            return _LETTER_OPTIONS.index(text)
        if text.isdigit():
            return int(text)
    raise ValueError(f"cannot interpret gold answer {value!r}")


def _parse_question(raw: Mapping, keys: Mapping[str, str], findings: list[Finding]) -> QuestionRecord | None:
    qid = str(raw.get(keys["id"], "")).strip()
    if not qid:
        findings.append(Finding("missing-id", "question without an id"))
        return None
    try:
        options = tuple(str(o) for o in raw.get(keys["options"], []) or [])
        gold = _coerce_gold(raw[keys["gold"]], len(options))
        t_query = float(raw[keys["time"]])
        record = QuestionRecord(
            question_id=qid,
            video_id=str(raw[keys["video"]]),
            track=str(raw[keys["track"]]).strip(),
            question=str(raw[keys["question"]]),
            options=options,
            gold_option=gold,
            query_time_s=t_query,
        )
    except (KeyError, TypeError, ValueError) as exc:
        findings.append(Finding("malformed-question", str(exc), question_id=qid))
        return None
    if not record.options:
        findings.append(Finding("missing-options", "question has no options", question_id=qid))
        return None
    if not (0 <= record.gold_option < len(record.options)):
        findings.append(
            Finding(
                "gold-out-of-range",
                f"gold option {record.gold_option} outside 0..{len(record.options) - 1}",
                question_id=qid,
            )
        )
        return None
    if record.query_time_s < 0:
        findings.append(
            Finding("negative-query-time", f"query time {record.query_time_s} < 0", question_id=qid)
        )
        return None
    return record


def _parse_grounding(raw: Mapping | None, findings: list[Finding]) -> GroundingMap | None:
    if raw is None:
        return None
    grounding: GroundingMap = {}
    for qid, entry in raw.items():
        try:
            intervals = tuple((float(a), float(b)) for a, b in entry["evidence"])
            grounding[str(qid)] = GroundingEntry(
                evidence=intervals, beta=float(entry.get("beta", DEFAULT_BETA))
            )
        except (KeyError, TypeError, ValueError) as exc:
            findings.append(Finding("malformed-grounding", str(exc), question_id=str(qid)))
    return grounding


def _load_native(raw: Mapping, findings: list[Finding]) -> BenchmarkSet:
    keys = {
        "id": "question_id",
        "video": "video_id",
        "track": "track",
        "question": "question",
        "options": "options",
        "gold": "gold_option",
        "time": "query_time_s",
    }
    questions = []
    for item in raw.get("questions", []):
        record = _parse_question(item, keys, findings)
        if record is not None:
            questions.append(record)
    category_map = {str(k): str(v) for k, v in raw.get("category_map", {}).items()}
    return BenchmarkSet(
        name=str(raw.get("name", "unnamed")),
        category_map=category_map,
        questions=tuple(questions),
        grounding=_parse_grounding(raw.get("grounding"), findings),
    )


def _load_ovo(raw: object, findings: list[Finding]) -> BenchmarkSet:
    """Adapter for OVO-Bench-style files: a list of task-tagged questions.

    Only the Real-Time and Backward categories are evaluated; Forward
    Active Responding items are reported as skipped, not dropped silently.
    The official question count is checked as metadata, never as a hard
    failure.
    """
    items = raw if isinstance(raw, list) else raw.get("questions", []) if isinstance(raw, dict) else []
    keys = {
        "id": "id",
        "video": "video",
        "track": "task",
        "question": "question",
        "options": "options",
        "gold": "answer",
        "time": "realtime",
    }
    questions = []
    for item in items:
        track = str(item.get("task", "")).strip()
        if track in FORWARD_TRACKS:
            findings.append(
                Finding(
                    "out-of-scope-track",
                    f"forward-category task {track} is not evaluated",
                    question_id=str(item.get("id")),
                    severity="warning",
                )
            )
            continue
        record = _parse_question(item, keys, findings)
        if record is not None:
            questions.append(record)
    total_seen = len(items)
    if total_seen != OVO_EXPECTED_QUESTIONS:
        findings.append(
            Finding(
                "unexpected-count",
                f"OVO file carries {total_seen} questions, official release has {OVO_EXPECTED_QUESTIONS}",
                severity="warning",
            )
        )
    return BenchmarkSet(name="ovo-bench", category_map=dict(OVO_CATEGORY_MAP), questions=tuple(questions))


def _load_streamingbench(raw: object, findings: list[Finding]) -> BenchmarkSet:
    """Adapter for the StreamingBench real-time visual understanding subset."""
    items = raw if isinstance(raw, list) else raw.get("questions", []) if isinstance(raw, dict) else []
    keys = {
        "id": "id",
        "video": "video",
        "track": "task_type",
        "question": "question",
        "options": "options",
        "gold": "answer",
        "time": "time_stamp",
    }
    questions = []
    tracks: set[str] = set()
    for item in items:
        record = _parse_question(item, keys, findings)
        if record is not None:
            questions.append(record)
            tracks.add(record.track)
    if len(items) != STREAMINGBENCH_EXPECTED_QUESTIONS:
        findings.append(
            Finding(
                "unexpected-count",
                f"StreamingBench file carries {len(items)} questions, "
                f"official RTVU subset has {STREAMINGBENCH_EXPECTED_QUESTIONS}",
                severity="warning",
            )
        )
    return BenchmarkSet(
        name="streamingbench-rtvu",
        category_map={t: "real_time" for t in sorted(tracks)},
        questions=tuple(questions),
    )


_LOADERS = {"native": _load_native, "ovo": _load_ovo, "streamingbench": _load_streamingbench}


def parse_benchmark(path: str | Path, format_tag: str = "native") -> tuple[BenchmarkSet, ValidationReport]:
    """Parse a benchmark file, collecting findings instead of stopping at the first."""
    if format_tag not in _LOADERS:
        raise InvalidConfigError(f"unknown benchmark format {format_tag!r}, expected one of {sorted(_LOADERS)}")
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BenchmarkFormatError(f"cannot read benchmark {path}: {exc}") from exc
    findings: list[Finding] = []
    bench = _LOADERS[format_tag](raw, findings)
    report = ValidationReport(findings=findings)
    report.findings.extend(validate(bench).findings)
    return bench, report


def load_benchmark(path: str | Path, format_tag: str = "native") -> BenchmarkSet:
    """Strict load: any error-severity finding fails with the itemized list."""
    bench, report = parse_benchmark(path, format_tag)
    if report.errors:
        raise BenchmarkFormatError(f"benchmark {path} failed validation", findings=report.errors)
    return bench


def validate(bench: BenchmarkSet, durations: Mapping[str, float] | None = None) -> ValidationReport:
    """Report-only checks over an already-built benchmark set."""
    report = ValidationReport()
    seen: set[str] = set()
    for q in bench.questions:
        if q.question_id in seen:
            report.findings.append(
                Finding("duplicate-id", f"question id {q.question_id!r} appears more than once", q.question_id)
            )
        seen.add(q.question_id)
        if not (0 <= q.gold_option < len(q.options)):
            report.findings.append(
                Finding(
                    "gold-out-of-range",
                    f"gold option {q.gold_option} outside 0..{len(q.options) - 1}",
                    q.question_id,
                )
            )
        if q.track not in bench.category_map:
            report.findings.append(
                Finding("unmapped-track", f"track {q.track!r} missing from category_map", q.question_id)
            )
        if q.query_time_s < 0:
            report.findings.append(
                Finding("negative-query-time", f"query time {q.query_time_s} < 0", q.question_id)
            )
        if durations is not None:
            duration = durations.get(q.video_id)
            if duration is not None and q.query_time_s > duration:
                report.findings.append(
                    Finding(
                        "query-beyond-stream",
                        f"query at t={q.query_time_s} exceeds stream duration {duration}",
                        q.question_id,
                    )
                )
    return report


@dataclass(frozen=True)
class SyntheticParams:
    """Knobs of the synthetic generator.

    Distances are sampled as whole seconds so closed-form window accuracy
    (the fraction of questions with d < N/fps) holds exactly on the 1 fps
    grid. Each question gets its own stream so planted retrieval targets
    never collide.
    """

    n_questions: int = 100
    stream_len_s: int = 200
    fps: float = 1.0
    recent_window_truth_s: int = 4
    distance_min_s: int = 10
    distance_max_s: int = 100
    fixed_distance_s: int | None = None
    evidence_len_s: int = 2
    n_options: int = 4
    beta: float = DEFAULT_BETA
    rt_fraction: float = 0.5
    on_overflow: str = "regenerate"  # or "error"

    def __post_init__(self) -> None:
        if self.n_questions < 1:
            raise InvalidConfigError("n_questions must be >= 1")
        if self.stream_len_s < 2:
            raise InvalidConfigError("stream_len_s must be >= 2")
        if self.fps <= 0:
            raise InvalidConfigError("fps must be positive")
        if self.recent_window_truth_s < 1:
            raise InvalidConfigError("recent_window_truth_s must be >= 1")
        if self.distance_min_s < 1 or self.distance_max_s < self.distance_min_s:
            raise InvalidConfigError("distance range must satisfy 1 <= min <= max")
        if self.evidence_len_s < 0:
            raise InvalidConfigError("evidence_len_s must be >= 0")
        if self.n_options < 2:
            raise InvalidConfigError("n_options must be >= 2")
        if not (0.0 <= self.rt_fraction <= 1.0):
            raise InvalidConfigError("rt_fraction must be in [0, 1]")
        if self.on_overflow not in ("regenerate", "error"):
            raise InvalidConfigError("on_overflow must be 'regenerate' or 'error'")


def gen_synthetic(seed: int, params: SyntheticParams = SyntheticParams()) -> BenchmarkSet:
    """Generate the two-track synthetic benchmark with a grounding map.

    SYN-RT plants evidence inside the last ``recent_window_truth_s`` seconds
    before the query; SYN-MEM plants it at a sampled whole-second distance d
    before the query (the interval ends exactly d seconds before the query
    time). Deterministic in the seed.
    """
    rng = random.Random(seed)
    n_rt = round(params.n_questions * params.rt_fraction)
    questions: list[QuestionRecord] = []
    grounding: GroundingMap = {}
    options = tuple(f"choice-{_LETTER_OPTIONS[j]}" for j in range(params.n_options))
    t_min_rt = max(params.recent_window_truth_s, params.stream_len_s // 2)
    for i in range(params.n_questions):
        is_rt = i < n_rt
        track = "SYN-RT" if is_rt else "SYN-MEM"
        video_id = f"syn-{seed}-{i:05d}"
        qid = f"{track}-{i:05d}"
        if is_rt:
            t_query = rng.randint(t_min_rt, params.stream_len_s)
            evidence = (float(t_query - (params.recent_window_truth_s - 1)), float(t_query))
            prompt = f"What is happening now in {video_id}?"
        else:
            distance = params.fixed_distance_s
            if distance is None:
                distance = rng.randint(params.distance_min_s, params.distance_max_s)
            if distance + params.evidence_len_s > params.stream_len_s:
                if params.on_overflow == "error":
                    raise InvalidConfigError(
                        f"distance {distance}s + evidence {params.evidence_len_s}s exceeds "
                        f"stream length {params.stream_len_s}s"
                    )
                while distance + params.evidence_len_s > params.stream_len_s:
                    distance = rng.randint(params.distance_min_s, params.distance_max_s)
            t_query = rng.randint(distance + params.evidence_len_s, params.stream_len_s)
            end = t_query - distance
            evidence = (float(end - params.evidence_len_s), float(end))
            prompt = f"What happened around t={end:.0f}s in {video_id}?"
        gold = rng.randrange(params.n_options)
        questions.append(
            QuestionRecord(
                question_id=qid,
                video_id=video_id,
                track=track,
                question=prompt,
                options=options,
                gold_option=gold,
                query_time_s=float(t_query),
            )
        )
        grounding[qid] = GroundingEntry(evidence=(evidence,), beta=params.beta)
    return BenchmarkSet(
        name=f"synthetic-seed{seed}",
        category_map={"SYN-RT": "real_time", "SYN-MEM": "backward"},
        questions=tuple(questions),
        grounding=grounding,
    )


def benchmark_to_dict(bench: BenchmarkSet) -> dict:
    payload: dict = {
        "name": bench.name,
        "category_map": dict(sorted(bench.category_map.items())),
        "questions": [
            {
                "question_id": q.question_id,
                "video_id": q.video_id,
                "track": q.track,
                "question": q.question,
                "options": list(q.options),
                "gold_option": q.gold_option,
                "query_time_s": q.query_time_s,
            }
            for q in bench.questions
        ],
    }
    if bench.grounding is not None:
        payload["grounding"] = {
            qid: {"evidence": [[a, b] for a, b in entry.evidence], "beta": entry.beta}
            for qid, entry in sorted(bench.grounding.items())
        }
    return payload


def save_benchmark(bench: BenchmarkSet, path: str | Path) -> None:
    """Write the native-format JSON; byte-identical for identical inputs."""
    text = json.dumps(benchmark_to_dict(bench), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def planted_distances(bench: BenchmarkSet, track: str = "SYN-MEM") -> dict[str, float]:
    """Query-to-evidence-end distance per question of the given track."""
    if bench.grounding is None:
        raise InvalidConfigError("benchmark carries no grounding")
    out: dict[str, float] = {}
    for q in bench.questions:
        if q.track != track:
            continue
        entry = bench.grounding.get(q.question_id)
        if entry is None or not entry.evidence:
            continue
        out[q.question_id] = q.query_time_s - max(b for _, b in entry.evidence)
    return out
