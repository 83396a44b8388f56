"""Command-line front end: single runs, experiment sweeps, capacity analysis.

Experiment sweeps emit one CSV row per replication plus an aggregate row
per (scheme, swept value). Every row is formatted from plain Python
numbers with fixed precision and emitted in a fixed order, so two runs
from the same config and seed produce byte-identical files.
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import analytic
from .caching import SchemeId, normalize_scheme
from .domain import (
    BITS_PER_MEGABIT,
    ConfigError,
    SimConfig,
    catalog_from_config,
    derive_seed,
    load_config,
    validate_config,
)
from .engine import MetricsReport, SimulationError, run_simulation

EXPERIMENT_NAMES = ("delay_vs_arrival", "delay_vs_length", "failure_vs_arrival", "custom")

_DEFAULT_ARRIVAL_SWEEP = (2.0, 4.0, 6.0, 8.0, 10.0)
_DEFAULT_LENGTH_SWEEP = (30.0, 60.0, 90.0)

CSV_COLUMNS = (
    "experiment",
    "scheme",
    "arrival_rate_per_min",
    "video_length_min",
    "replication",
    "seed",
    "arrivals",
    "mean_delay_ms",
    "ci95_ms",
    "failure_prob",
    "attempts",
    "failures",
    "outcome_channel_slot",
    "outcome_neighbor",
    "outcome_relay",
    "outcome_por",
    "outcome_lps",
    "lps_requests",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully-resolved sweep: what to run, over what, and where to write."""

    name: str
    schemes: tuple[SchemeId, ...]
    sweep_var: str
    values: tuple[float, ...]
    replications: int
    base: SimConfig
    out_path: str

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise ValueError(f"unknown experiment {self.name!r}")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.sweep_var not in ("arrival_rate_per_min", "video_length_minutes"):
            raise ValueError(f"unsupported sweep variable {self.sweep_var!r}")


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _fmt_lps(requests: dict[int, int]) -> str:
    return ";".join(f"{k}:{requests[k]}" for k in sorted(requests))


def _run_row(spec: ExperimentSpec, cfg: SimConfig, rep: int, report: MetricsReport) -> str:
    cells = (
        spec.name,
        report.scheme,
        f"{cfg.arrival_rate_per_min:g}",
        f"{cfg.video_length_minutes:g}",
        str(rep),
        str(report.seed),
        str(report.arrivals),
        _fmt(report.mean_startup_delay_ms),
        "",
        _fmt(report.failure_probability),
        str(report.attempts),
        str(report.failures),
        str(report.outcome_counts["channel_slot"]),
        str(report.outcome_counts["neighbor"]),
        str(report.outcome_counts["relay"]),
        str(report.outcome_counts["por"]),
        str(report.outcome_counts["lps"]),
        _fmt_lps(report.lps_requests),
    )
    return ",".join(cells)


def _agg_row(spec: ExperimentSpec, cfg: SimConfig, reports: list[MetricsReport]) -> str:
    def col(values: list[float | None]) -> str:
        kept = [v for v in values if v is not None]
        return _fmt(sum(kept) / len(kept)) if kept else ""

    means = [r.mean_startup_delay_ms for r in reports if r.mean_startup_delay_ms is not None]
    if len(means) >= 2:
        ci = 1.96 * statistics.stdev(means) / math.sqrt(len(means))
    else:
        ci = 0.0 if means else None
    cells = (
        spec.name,
        reports[0].scheme,
        f"{cfg.arrival_rate_per_min:g}",
        f"{cfg.video_length_minutes:g}",
        "agg",
        str(spec.base.seed),
        col([float(r.arrivals) for r in reports]),
        col([r.mean_startup_delay_ms for r in reports]),
        _fmt(ci),
        col([r.failure_probability for r in reports]),
        col([float(r.attempts) for r in reports]),
        col([float(r.failures) for r in reports]),
        col([float(r.outcome_counts["channel_slot"]) for r in reports]),
        col([float(r.outcome_counts["neighbor"]) for r in reports]),
        col([float(r.outcome_counts["relay"]) for r in reports]),
        col([float(r.outcome_counts["por"]) for r in reports]),
        col([float(r.outcome_counts["lps"]) for r in reports]),
        "",
    )
    return ",".join(cells)


def _cfg_for_value(spec: ExperimentSpec, value: float) -> SimConfig:
    if spec.sweep_var == "video_length_minutes":
        return replace(spec.base, video_length_minutes=int(value))
    return replace(spec.base, arrival_rate_per_min=value)


def run_experiment(spec: ExperimentSpec) -> Path:
    """Execute the sweep and write its CSV; returns the output path.

    Runs are seeded by hashing (base seed, scheme, swept value,
    replication index) with the package's 64-bit label mix, so each run
    is independent yet exactly reproducible, and rows appear in fixed
    (scheme, value, replication) order no matter how the work is done.
    """
    lines = [",".join(CSV_COLUMNS)]
    for scheme in spec.schemes:
        for value in spec.values:
            cfg_v = _cfg_for_value(spec, value)
            reports = []
            for rep in range(spec.replications):
                seed = derive_seed(spec.base.seed, scheme.value, f"{value:g}", rep)
                cfg = replace(cfg_v, seed=seed)
                report = run_simulation(cfg, scheme)
                reports.append(report)
                lines.append(_run_row(spec, cfg, rep, report))
            lines.append(_agg_row(spec, cfg_v, reports))
    out = Path(spec.out_path)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _scheme_arg(text: str) -> list[SchemeId]:
    try:
        return [normalize_scheme(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _sweep_arg(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sweep list {text!r}") from None


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse the command line; exits with status 2 on usage errors."""
    parser = argparse.ArgumentParser(
        prog="sbvod",
        description="Staggered-broadcast VOD simulator and capacity model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one simulation and print its metrics")
    sim.add_argument("--config", type=str, default=None, help="config file path")
    sim.add_argument("--scheme", type=_scheme_arg, default=[SchemeId.NO_CACHE],
                     help="caching scheme (e.g. proxy, por, dsc, all, random, no)")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--out", type=str, default=None, help="also write a one-row CSV")
    sim.add_argument("--trace", action="store_true", help="write an event trace to stderr")

    exp = sub.add_parser("experiment", help="run a sweep and write a CSV")
    exp.add_argument("--config", type=str, default=None)
    exp.add_argument("--name", choices=EXPERIMENT_NAMES, default="delay_vs_arrival")
    exp.add_argument("--scheme", type=_scheme_arg, default=None,
                     help="comma-separated schemes; default is all six")
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--reps", type=int, default=5, help="replications per point")
    exp.add_argument("--out", type=str, required=True)
    exp.add_argument("--sweep", type=_sweep_arg, default=None,
                     help="override sweep values, e.g. 2,4,6")
    exp.add_argument("--sweep-var", choices=("arrival", "length"), default=None,
                     help="swept variable for custom experiments")

    ana = sub.add_parser("analyze", help="print the analytic capacity report")
    ana.add_argument("--config", type=str, default=None)
    ana.add_argument("--cache-mbit", type=float, default=None,
                     help="proxy cache size in megabits (default: half the catalog)")
    ana.add_argument("--reserved-mbps", type=float, default=0.0,
                     help="bandwidth kept aside to rebroadcast uncached videos")
    ana.add_argument("--lps-channels", type=int, default=1,
                     help="proxy channels replaying each broadcast-selected item")
    ana.add_argument("--arrival-per-sec", type=float, default=None,
                     help="request rate (default: config arrivals per minute / 60)")
    ana.add_argument("--service-minutes", type=float, default=None,
                     help="mean stream holding time (default: the video length)")
    ana.add_argument("--out", type=str, default=None, help="also write key,value CSV")

    return parser.parse_args(argv)


def _load_base_config(path: str | None, seed: int | None) -> SimConfig:
    cfg = load_config(path) if path else SimConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def build_experiment_spec(ns: argparse.Namespace) -> ExperimentSpec:
    base = _load_base_config(ns.config, ns.seed)
    schemes = tuple(ns.scheme) if ns.scheme else tuple(SchemeId)
    if ns.name == "delay_vs_length":
        sweep_var, values = "video_length_minutes", _DEFAULT_LENGTH_SWEEP
    elif ns.name in ("delay_vs_arrival", "failure_vs_arrival"):
        sweep_var, values = "arrival_rate_per_min", _DEFAULT_ARRIVAL_SWEEP
    else:
        if ns.sweep is None or ns.sweep_var is None:
            raise ConfigError("custom experiments need --sweep and --sweep-var")
        sweep_var = "arrival_rate_per_min" if ns.sweep_var == "arrival" else "video_length_minutes"
        values = ns.sweep
    if ns.sweep is not None and ns.name != "custom":
        values = ns.sweep
    return ExperimentSpec(
        name=ns.name,
        schemes=schemes,
        sweep_var=sweep_var,
        values=values,
        replications=ns.reps,
        base=base,
        out_path=ns.out,
    )


def _print_aligned(pairs: list[tuple[str, object]], file=None) -> None:
    width = max(len(k) for k, _ in pairs)
    for key, value in pairs:
        print(f"{key:<{width}}  {value}", file=file)


def _report_pairs(report: MetricsReport) -> list[tuple[str, object]]:
    return [
        ("scheme", report.scheme),
        ("seed", report.seed),
        ("arrivals", report.arrivals),
        ("mean_startup_delay_ms", _fmt(report.mean_startup_delay_ms) or "n/a"),
        ("failure_probability", _fmt(report.failure_probability) or "n/a"),
        ("attempts", report.attempts),
        ("failures", report.failures),
        ("outcome_counts", report.outcome_counts),
        ("lps_requests", report.lps_requests),
        ("empty", report.empty),
    ]


def _cmd_simulate(ns: argparse.Namespace) -> int:
    if len(ns.scheme) != 1:
        raise ConfigError("simulate takes exactly one --scheme")
    cfg = _load_base_config(ns.config, ns.seed)
    scheme = ns.scheme[0]
    trace = sys.stderr if ns.trace else None
    report = run_simulation(cfg, scheme, trace=trace)
    _print_aligned(_report_pairs(report))
    if ns.out:
        spec = ExperimentSpec(
            name="custom",
            schemes=(scheme,),
            sweep_var="arrival_rate_per_min",
            values=(cfg.arrival_rate_per_min,),
            replications=1,
            base=cfg,
            out_path=ns.out,
        )
        header = ",".join(CSV_COLUMNS)
        row = _run_row(spec, cfg, 0, report)
        Path(ns.out).write_text(header + "\n" + row + "\n", encoding="utf-8")
    return 0


def _cmd_experiment(ns: argparse.Namespace) -> int:
    spec = build_experiment_spec(ns)
    out = run_experiment(spec)
    print(f"wrote {out}")
    return 0


def _cmd_analyze(ns: argparse.Namespace) -> int:
    cfg = _load_base_config(ns.config, None)
    videos = catalog_from_config(cfg)
    total_bits = sum(q.size_bits for v in videos for q in v.qualities)
    cache_bits = (
        ns.cache_mbit * BITS_PER_MEGABIT if ns.cache_mbit is not None else total_bits / 2.0
    )
    lam = ns.arrival_per_sec if ns.arrival_per_sec is not None else cfg.arrival_rate_per_min / 60.0
    service_min = ns.service_minutes if ns.service_minutes is not None else float(cfg.video_length_minutes)
    bandwidth_bits = cfg.bandwidth_mbps * BITS_PER_MEGABIT

    placement = analytic.place_cache(videos, cache_bits)
    if ns.reserved_mbps > 0.0:
        placement = analytic.select_broadcast_videos(
            videos, placement, ns.reserved_mbps * BITS_PER_MEGABIT, ns.lps_channels
        )
        report = analytic.broadcast_analysis(videos, placement, lam, bandwidth_bits, service_min)
    else:
        report = analytic.dedicated_stream_analysis(videos, placement, lam, bandwidth_bits, service_min)

    cached = sorted(k for k, flag in placement.cached.items() if flag)
    broadcast = sorted(k for k, flag in placement.broadcast.items() if flag)
    pairs: list[tuple[str, object]] = [
        ("videos", len(videos)),
        ("cache_capacity_mbit", f"{cache_bits / BITS_PER_MEGABIT:.6g}"),
        ("cached_items", " ".join(f"v{v}q{q}" for v, q in cached) or "(none)"),
        ("broadcast_items", " ".join(f"v{v}q{q}" for v, q in broadcast) or "(none)"),
        ("hit_ratio", f"{report.hit_ratio:.6f}"),
        ("lambda_dedicated_per_sec", f"{report.lambda_dedicated:.6f}"),
        ("avg_stream_rate_bps", f"{report.avg_stream_rate:.6g}"),
        ("supported_streams", report.supported_streams),
        ("broadcast_bandwidth_bps", f"{report.broadcast_bandwidth:.6g}"),
        ("lambda_broadcast_per_sec", f"{report.lambda_broadcast:.6f}"),
        ("avg_broadcast_rate_bps", f"{report.avg_broadcast_rate:.6g}"),
        ("dedicated_capacity", report.dedicated_capacity),
        ("blocking_prob", f"{report.blocking_prob:.6g}"),
        ("overall_blocking", f"{report.overall_blocking:.6g}"),
        ("mean_service_minutes", f"{report.mean_service_minutes:.6g}"),
    ]
    _print_aligned(pairs)
    if ns.out:
        rows = ["key,value"] + [f"{k},{v}" for k, v in pairs]
        Path(ns.out).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def main(argv: list[str] | None = None) -> int:
    ns = parse_args(argv)
    try:
        if ns.command == "simulate":
            return _cmd_simulate(ns)
        if ns.command == "experiment":
            return _cmd_experiment(ns)
        if ns.command == "analyze":
            return _cmd_analyze(ns)
        raise ConfigError(f"unknown command {ns.command!r}")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"sbvod: {exc}", file=sys.stderr)
        return 2
    except (SimulationError, OSError, ValueError) as exc:
        print(f"sbvod: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
