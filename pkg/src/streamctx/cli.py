"""Command-line interface: run, sweep, report, validate, serve.

Configuration comes from a TOML file (JSON equivalent accepted); flags
override file values, and STREAMCTX_* environment variables sit between the
two. The serve command exposes the deterministic wire-protocol service so
the http backend has a local target.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .bench import parse_benchmark
from .errors import StreamCtxError
from .runner import apply_env_overrides, config_from_dict, load_config_file, run_eval, run_sweep
from .scoring import (
    ablation_delta_table,
    ablation_to_markdown,
    from_track_values,
    load_results_json,
    results_to_csv,
    results_to_markdown,
)
from .service import ServiceConfig, create_app


@click.group()
def main() -> None:
    """Streaming-context evaluation harness."""


def _load_run_config(config_path: str, overrides: dict):
    raw = load_config_file(config_path)
    raw = apply_env_overrides(raw, os.environ)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "policy_kind":
            raw.setdefault("policy", {})
            raw["policy"] = {**raw["policy"], "kind": value}
        elif key == "n_recent":
            raw.setdefault("policy", {})
            raw["policy"] = {**raw["policy"], "n_recent": value}
        elif key == "backend_kind":
            backend = dict(raw.get("backend", {}))
            backend.pop("mock", None)
            backend.pop("http", None)
            backend["kind"] = value
            raw["backend"] = backend
        else:
            raw[key] = value
    return config_from_dict(raw)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="TOML or JSON run config.")
@click.option("--policy", "policy_kind", type=click.Choice(["recency", "visual_rag", "keep_all"]), default=None)
@click.option("--n", "n_recent", type=int, default=None, help="Recent-window size override.")
@click.option("--backend", "backend_kind", type=click.Choice(["mock", "http"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def run(config_path, policy_kind, n_recent, backend_kind, seed, out_dir) -> None:
    """Evaluate one configuration end to end and write result files."""
    try:
        config = _load_run_config(
            config_path,
            {
                "policy_kind": policy_kind,
                "n_recent": n_recent,
                "backend_kind": backend_kind,
                "seed": seed,
                "out_dir": out_dir,
            },
        )
        result = run_eval(config)
    except StreamCtxError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"run {result.run_id}: {len(result.rows)} questions, {result.failures} failures")
    rt = "--" if result.report.rt_avg is None else f"{result.report.rt_avg:.2f}"
    bwd = "--" if result.report.bwd_avg is None else f"{result.report.bwd_avg:.2f}"
    click.echo(f"rt {rt}  bwd {bwd}  overall {result.report.overall_avg:.2f}")
    click.echo(f"results in {result.out_dir}")
    if result.failures and config.missing == "strict":
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--n", "ns", required=True, help="Comma-separated window sizes, e.g. 2,4,8,16.")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def sweep(config_path, ns, seed, out_dir) -> None:
    """Run the recency-window sweep and write one result set per N."""
    try:
        sizes = tuple(int(part) for part in ns.split(",") if part.strip())
    except ValueError as exc:
        raise click.ClickException(f"cannot parse window sizes {ns!r}") from exc
    try:
        config = _load_run_config(config_path, {"seed": seed, "out_dir": out_dir})
        results = run_sweep(config, sizes)
    except StreamCtxError as exc:
        raise click.ClickException(str(exc)) from exc
    for n, result in zip(sizes, results):
        click.echo(f"N={n}: overall {result.report.overall_avg:.2f} -> {result.out_dir}")
    click.echo(f"sweep table in {Path(config.out_dir) / 'sweep.csv'}")


@main.command()
@click.argument("results", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--reference", type=click.Path(exists=True), default=None, help="Reference results.json for deltas.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Also write CSV/markdown here.")
def report(results, reference, out_dir) -> None:
    """Render comparison tables from one or more results.json files."""
    payloads = [load_results_json(p) for p in results]
    md = results_to_markdown(payloads)
    click.echo(md, nl=False)
    deltas_csv = None
    if reference:
        ref = load_results_json(reference)
        lines = ["run_id,delta_p,delta_m"]
        for p in payloads:
            dp = ""
            if p.get("rt_avg") is not None and ref.get("rt_avg") is not None:
                dp = f"{p['rt_avg'] - ref['rt_avg']}"
            dm = ""
            if p.get("er") is not None and ref.get("er") is not None:
                dm = f"{p['er'] - ref['er']}"
            lines.append(f"{p['run_id']},{dp},{dm}")
        deltas_csv = "\n".join(lines) + "\n"
        click.echo(f"\nreference: {ref['run_id']}")
        click.echo(deltas_csv, nl=False)
    ablation_md = None
    if len(payloads) == 2:
        base, variant = payloads
        table = ablation_delta_table(
            from_track_values(base["per_track"]),
            from_track_values(variant["per_track"]),
            _category_map_of(base, variant),
        )
        ablation_md = ablation_to_markdown(
            table, base_label=base["run_id"], variant_label=variant["run_id"]
        )
        click.echo("\nablation (variant - base):")
        click.echo(ablation_md, nl=False)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.md").write_text(md, encoding="utf-8")
        (out / "comparison.csv").write_text(results_to_csv(payloads), encoding="utf-8")
        if deltas_csv:
            (out / "deltas.csv").write_text(deltas_csv, encoding="utf-8")
        if ablation_md:
            (out / "ablation.md").write_text(ablation_md, encoding="utf-8")


def _category_map_of(*payloads) -> dict[str, str]:
    # Results files do not embed the category map; reconstruct from the track
    # names (OVO tracks plus the SYN-RT/SYN-MEM synthetic pair).
    from .bench import OVO_CATEGORY_MAP

    mapping = dict(OVO_CATEGORY_MAP)
    mapping["SYN-RT"] = "real_time"
    mapping["SYN-MEM"] = "backward"
    for payload in payloads:
        for track in payload.get("per_track", {}):
            mapping.setdefault(track, "real_time")
    return mapping


@main.command()
@click.option("--benchmark", "benchmark_path", required=True, type=click.Path(exists=True))
@click.option("--format", "format_tag", type=click.Choice(["native", "ovo", "streamingbench"]), default="native")
def validate(benchmark_path, format_tag) -> None:
    """Check a benchmark file and list every finding; nonzero exit on errors."""
    try:
        bench, report_ = parse_benchmark(benchmark_path, format_tag)
    except StreamCtxError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{bench.name}: {len(bench.questions)} questions, {len(bench.tracks())} tracks")
    for finding in report_.findings:
        click.echo(str(finding))
    if report_.errors:
        click.echo(f"{len(report_.errors)} errors")
        sys.exit(1)
    click.echo("ok")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8008)
@click.option("--mode", type=click.Choice(["echo", "scripted"]), default="echo")
@click.option("--answer-delay-ms", type=float, default=0.0)
@click.option("--embed-dim", type=int, default=64)
@click.option("--max-frames", type=int, default=256)
def serve(host, port, mode, answer_delay_ms, embed_dim, max_frames) -> None:
    """Serve the deterministic wire-protocol endpoints (answer/embed/health)."""
    import uvicorn

    app = create_app(
        ServiceConfig(
            mode=mode,
            answer_delay_ms=answer_delay_ms,
            embed_dim=embed_dim,
            max_frames=max_frames,
        )
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
