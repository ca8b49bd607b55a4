"""End-to-end run orchestration: config, per-question pipeline, reports.

For each question the runner looks up the timeline, takes the causal prefix
at the query time, builds the working context under the configured policy,
dispatches to the backend, and streams a result row to disk. Rows carry no
wall-clock data, so mock-backed runs are byte-reproducible; timing lands in
the separate efficiency files. Questions are independent work units; a
bounded thread pool processes them in benchmark order and a single writer
owns the output files.
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import bench as bench_mod
from .backends import (
    AnswerBackend,
    BackendError,
    BackendResponse,
    EndpointConfig,
    HttpBackend,
    HttpEmbedder,
    MockBackend,
    build_request,
    check_wire_causality,
)
from .bench import BenchmarkSet, SyntheticParams
from .context_policies import (
    IncrementalIndexBuilder,
    PolicyConfig,
    build_context,
    fresh_index_builder,
)
from .embedders import HashEmbedder, SyntheticEmbedder
from .errors import InvalidConfigError
from .profiler import EfficiencySample, efficiency_report, write_plot_data
from .scoring import (
    CategoryReport,
    TrackScores,
    category_averages,
    results_payload,
    results_to_csv,
    results_to_markdown,
    track_accuracy,
    write_results_json,
)
from .stream_core import StreamTimeline, load_manifest, sample_timeline, visible_prefix

ENV_PREFIX = "STREAMCTX_"


@dataclass(frozen=True)
class BenchmarkSource:
    """Where questions come from: a file in some format, or the generator."""

    path: str | None = None
    format: str = "native"
    synthetic: SyntheticParams | None = None

    def __post_init__(self) -> None:
        if (self.path is None) == (self.synthetic is None):
            raise InvalidConfigError("benchmark needs exactly one of: path, synthetic params")


@dataclass(frozen=True)
class BackendSettings:
    kind: str  # "mock" | "http"
    url: str = "http://127.0.0.1:8008"
    timeout_s: float = 30.0
    retries: int = 2
    frame_mode: str = "ref"

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http"):
            raise InvalidConfigError(f"unknown backend kind {self.kind!r}")
        if self.frame_mode not in ("ref", "b64"):
            raise InvalidConfigError(f"unknown frame mode {self.frame_mode!r}")


@dataclass(frozen=True)
class RunConfig:
    benchmark: BenchmarkSource
    policy: PolicyConfig
    backend: BackendSettings
    seed: int = 0
    concurrency: int = 1
    out_dir: str = "out"
    reference_path: str | None = None
    timeline_dir: str | None = None
    embed_dim: int = 64
    missing: str = "wrong"
    strict: bool = False
    incremental_index: bool = False
    sweep_n: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise InvalidConfigError("concurrency must be >= 1")
        if self.embed_dim < 1:
            raise InvalidConfigError("embed_dim must be >= 1")
        if self.missing not in ("wrong", "strict"):
            raise InvalidConfigError(f"unknown missing-response policy {self.missing!r}")


def _require_table(value: Any, name: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise InvalidConfigError(f"config section {name!r} must be a table")
    return dict(value)


def config_from_dict(raw: Mapping[str, Any]) -> RunConfig:
    """Build a RunConfig from parsed TOML/JSON, with itemized messages."""
    raw = dict(raw)
    bench_raw = _require_table(raw.get("benchmark"), "benchmark")
    synthetic = None
    if "synthetic" in bench_raw:
        synthetic = SyntheticParams(**_require_table(bench_raw["synthetic"], "benchmark.synthetic"))
    source = BenchmarkSource(
        path=bench_raw.get("path"),
        format=bench_raw.get("format", "native"),
        synthetic=synthetic,
    )
    policy_raw = _require_table(raw.get("policy"), "policy")
    policy = PolicyConfig(**policy_raw) if policy_raw else PolicyConfig(kind="recency")
    backend_raw = _require_table(raw.get("backend"), "backend")
    sub_kinds = [k for k in ("mock", "http") if k in backend_raw]
    if len(sub_kinds) > 1:
        raise InvalidConfigError(
            "config sets both backends; exactly one of backend.mock / backend.http is allowed"
        )
    if sub_kinds:
        kind = sub_kinds[0]
        params = _require_table(backend_raw.pop(kind), f"backend.{kind}")
        declared = backend_raw.pop("kind", None)
        if declared is not None and declared != kind:
            raise InvalidConfigError(f"backend.kind={declared!r} contradicts the backend.{kind} table")
        backend = BackendSettings(kind=kind, **{**backend_raw, **params})
    else:
        backend = BackendSettings(**{"kind": "mock", **backend_raw})
    reference = raw.get("reference")
    if isinstance(reference, Mapping):
        reference = reference.get("path")
    return RunConfig(
        benchmark=source,
        policy=policy,
        backend=backend,
        seed=int(raw.get("seed", 0)),
        concurrency=int(raw.get("concurrency", 1)),
        out_dir=str(raw.get("out_dir", "out")),
        reference_path=reference,
        timeline_dir=raw.get("timeline_dir"),
        embed_dim=int(raw.get("embed_dim", 64)),
        missing=str(raw.get("missing", "wrong")),
        strict=bool(raw.get("strict", False)),
        incremental_index=bool(raw.get("incremental_index", False)),
        sweep_n=tuple(int(n) for n in raw.get("sweep_n", ())),
    )


def load_config_file(path: str | Path) -> dict:
    """Parse a TOML config, or its JSON equivalent (by extension)."""
    p = Path(path)
    try:
        if p.suffix.lower() == ".json":
            return json.loads(p.read_text(encoding="utf-8"))
        with p.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise InvalidConfigError(f"config file {path} not found") from exc
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InvalidConfigError(f"config file {path} does not parse: {exc}") from exc


def apply_env_overrides(raw: dict, environ: Mapping[str, str]) -> dict:
    """STREAMCTX_* variables override file values (flags override both)."""
    out = dict(raw)
    if ENV_PREFIX + "SEED" in environ:
        out["seed"] = int(environ[ENV_PREFIX + "SEED"])
    if ENV_PREFIX + "OUT" in environ:
        out["out_dir"] = environ[ENV_PREFIX + "OUT"]
    if ENV_PREFIX + "CONCURRENCY" in environ:
        out["concurrency"] = int(environ[ENV_PREFIX + "CONCURRENCY"])
    if ENV_PREFIX + "BACKEND" in environ:
        out["backend"] = {**out.get("backend", {}), "kind": environ[ENV_PREFIX + "BACKEND"]}
    if ENV_PREFIX + "HTTP_URL" in environ:
        out["backend"] = {**out.get("backend", {}), "url": environ[ENV_PREFIX + "HTTP_URL"]}
    return out


def run_id_for(config: RunConfig) -> str:
    """Stable id of the logical run: exactly the fields that can change results."""
    payload = {
        "benchmark": asdict(config.benchmark),
        "policy": asdict(config.policy),
        "backend": asdict(config.backend),
        "seed": config.seed,
        "embed_dim": config.embed_dim,
        "missing": config.missing,
        "timeline_dir": config.timeline_dir,
        "incremental_index": config.incremental_index,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


class _TimelineProvider:
    """Timelines from manifests when a directory is configured, otherwise
    synthesized on the sampling grid (the prefix at the query time is
    identical either way because frames past the query never matter)."""

    def __init__(self, timeline_dir: str | None, fps: float):
        self._dir = Path(timeline_dir) if timeline_dir else None
        self._fps = fps
        self._cache: dict[str, StreamTimeline] = {}

    def prefix_at(self, video_id: str, t_query: float):
        if self._dir is None:
            return sample_timeline(video_id, t_query, self._fps).frames
        timeline = self._cache.get(video_id)
        if timeline is None:
            timeline = load_manifest(self._dir / f"{video_id}.json")
            self._cache[video_id] = timeline
        return visible_prefix(timeline, t_query)


@dataclass
class RunResult:
    run_id: str
    out_dir: Path
    payload: dict
    scores: TrackScores
    report: CategoryReport
    rows: list[dict]
    failures: int


def _make_backend(config: RunConfig, benchmark: BenchmarkSet) -> AnswerBackend:
    if config.backend.kind == "mock":
        if benchmark.grounding is None:
            raise InvalidConfigError("the mock backend needs a benchmark with a grounding map")
        gold = {q.question_id: q.gold_option for q in benchmark.questions}
        return MockBackend(benchmark.grounding, gold, seed=config.seed)
    endpoint = EndpointConfig(
        base_url=config.backend.url,
        timeout_s=config.backend.timeout_s,
        retries=config.backend.retries,
        max_inflight=config.concurrency,
    )
    return HttpBackend(endpoint)


def _make_query_embedder(config: RunConfig, benchmark: BenchmarkSet):
    """Returns (frame_embedder, question -> query vector)."""
    if config.backend.kind == "http":
        embedder = HttpEmbedder(
            EndpointConfig(base_url=config.backend.url, timeout_s=config.backend.timeout_s),
            frame_mode=config.backend.frame_mode,
        )
        return embedder, lambda q: embedder.embed_text(q.question)
    if benchmark.grounding is not None:
        embedder = SyntheticEmbedder(benchmark, dim=config.embed_dim, seed=config.seed)
        return embedder, lambda q: embedder.embed_query(q.question_id)
    embedder = HashEmbedder(dim=config.embed_dim, seed=config.seed)
    return embedder, lambda q: embedder.embed_text(q.question)


def resolve_benchmark(config: RunConfig) -> BenchmarkSet:
    if config.benchmark.synthetic is not None:
        return bench_mod.gen_synthetic(config.seed, config.benchmark.synthetic)
    return bench_mod.load_benchmark(config.benchmark.path, config.benchmark.format)


def run_eval(config: RunConfig, benchmark: BenchmarkSet | None = None) -> RunResult:
    """Execute one run and write results/efficiency/report files.

    Per-question rows stream to results.jsonl as they complete; rerunning
    with a partial file resumes, skipping already-answered query ids.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if benchmark is None:
        benchmark = resolve_benchmark(config)
    run_id = run_id_for(config)

    needs_embedder = config.policy.kind == "visual_rag"
    frame_embedder = None
    query_vec_of = None
    index_builder = None
    if needs_embedder:
        frame_embedder, query_vec_of = _make_query_embedder(config, benchmark)
        if config.incremental_index:
            caches: dict[str, IncrementalIndexBuilder] = {}

            def index_builder(history, chunk_len):
                # one cache per video; growing histories share their first frame
                key = history[0].source if history else ""
                cache = caches.get(key)
                if cache is None:
                    cache = caches[key] = IncrementalIndexBuilder(frame_embedder)
                return cache(history, chunk_len)

        else:
            index_builder = fresh_index_builder(frame_embedder)

    backend = _make_backend(config, benchmark)
    timelines = _TimelineProvider(config.timeline_dir, config.policy.fps)

    jsonl_path = out_dir / "results.jsonl"
    done: dict[str, dict] = {}
    if jsonl_path.exists():
        for line in jsonl_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                done[row["query_id"]] = row

    pending = [q for q in benchmark.questions if q.question_id not in done]
    eff_samples: list[EfficiencySample] = []
    failures = 0

    def work(question):
        prefix = timelines.prefix_at(question.video_id, question.query_time_s)
        bundle = build_context(
            prefix,
            config.policy,
            query_embedding=query_vec_of(question) if needs_embedder else None,
            index_builder=index_builder,
            t_query=question.query_time_s,
        )
        request = build_request(
            bundle,
            query_id=question.question_id,
            question=question.question,
            options=question.options,
            frame_mode=config.backend.frame_mode,
        )
        check_wire_causality(request)
        started = time.perf_counter()
        error = None
        response = None
        try:
            response = backend.answer(request)
        except BackendError as exc:
            if config.strict:
                raise
            error = str(exc)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        row = {
            "query_id": question.question_id,
            "track": question.track,
            "gold_option": question.gold_option,
            "chosen_option": response.chosen_option if response else None,
            "answer_text": response.answer_text if response else None,
            "correct": bool(response and response.chosen_option == question.gold_option),
            "error": error,
        }
        sample = EfficiencySample(
            observed_frames=len(prefix),
            ttft_ms=response.ttft_ms if response and response.ttft_ms is not None else elapsed_ms,
            peak_retained_bytes=bundle.budget.retained_bytes,
            policy_id=config.policy.policy_id,
            backend_id=backend.backend_id,
            ttft_definition=(response.ttft_definition if response else None) or "client_call_elapsed",
        )
        return row, sample, error

    def consume(results_iter, sink):
        nonlocal failures
        for row, sample, error in results_iter:
            if error is not None:
                failures += 1
            done[row["query_id"]] = row
            sink.write(json.dumps(row, sort_keys=True) + "\n")
            eff_samples.append(sample)

    with jsonl_path.open("a", encoding="utf-8") as sink:
        if config.concurrency > 1 and pending:
            with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
                consume(pool.map(work, pending), sink)
        else:
            consume(map(work, pending), sink)

    rows = [done[q.question_id] for q in benchmark.questions if q.question_id in done]
    scores = _score_rows(rows, benchmark, config.missing)
    report = category_averages(scores, benchmark.category_map)

    extra: dict[str, Any] = {
        "benchmark": asdict(config.benchmark),
        "seed": config.seed,
        "n_questions": len(rows),
        "failures": failures,
    }
    if config.reference_path:
        extra.update(_deltas_against_reference(report, config.reference_path))

    payload = results_payload(
        run_id=run_id,
        policy=asdict(config.policy),
        backend=config.backend.kind,
        scores=scores,
        report=report,
        extra=extra,
    )
    write_results_json(payload, out_dir / "results.json")
    (out_dir / "results.csv").write_text(results_to_csv([payload]), encoding="utf-8")
    (out_dir / "results.md").write_text(results_to_markdown([payload]), encoding="utf-8")
    if eff_samples:
        eff = efficiency_report(eff_samples)
        (out_dir / "efficiency.csv").write_text(eff.to_csv(), encoding="utf-8")
        write_plot_data(eff, out_dir / "efficiency_plot.json")
    for closable in (backend, frame_embedder):
        close = getattr(closable, "close", None)
        if close is not None:
            close()
    return RunResult(
        run_id=run_id,
        out_dir=out_dir,
        payload=payload,
        scores=scores,
        report=report,
        rows=rows,
        failures=failures,
    )


def _score_rows(rows, benchmark: BenchmarkSet, missing: str) -> TrackScores:
    responses = [
        BackendResponse(
            query_id=row["query_id"],
            answer_text=row["answer_text"] or "",
            chosen_option=row["chosen_option"],
        )
        for row in rows
    ]
    return track_accuracy(responses, benchmark, missing=missing)


def _deltas_against_reference(report: CategoryReport, reference_path: str) -> dict:
    ref = json.loads(Path(reference_path).read_text(encoding="utf-8"))
    out: dict[str, Any] = {}
    if ref.get("rt_avg") is not None:
        out["delta_p"] = report.rt_avg - ref["rt_avg"]
        out["reference_id"] = str(ref.get("run_id", reference_path))
    if report.er is not None and ref.get("er") is not None:
        out["delta_m"] = report.er - ref["er"]
        out.setdefault("reference_id", str(ref.get("run_id", reference_path)))
    return out


def run_sweep(config: RunConfig, ns: tuple[int, ...]) -> list[RunResult]:
    """Fan a run out over window sizes; one subdirectory per N plus a summary."""
    if not ns:
        raise InvalidConfigError("sweep needs a non-empty list of window sizes")
    base_out = Path(config.out_dir)
    base_out.mkdir(parents=True, exist_ok=True)
    results = []
    benchmark = resolve_benchmark(config)
    for n in ns:
        sub = replace(
            config,
            policy=replace(config.policy, n_recent=n),
            out_dir=str(base_out / f"sweep_n{n}"),
            sweep_n=(),
        )
        results.append(run_eval(sub, benchmark=benchmark))
    lines = ["n,rt_avg,bwd_avg,overall_avg,er"]
    for n, result in zip(ns, results):
        cells = [
            "" if value is None else str(value)
            for value in (
                result.report.rt_avg,
                result.report.bwd_avg,
                result.report.overall_avg,
                result.report.er,
            )
        ]
        lines.append(",".join([str(n), *cells]))
    (base_out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return results
