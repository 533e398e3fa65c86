"""Command-line pipeline: extract, stats, weekly, sim-checkpoint, sim-retry.

Every subcommand writes tidy CSV/JSON files into ``--out-dir``. A
``--config`` file of ``key=value`` lines supplies defaults for any flag;
flags given on the command line win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ck
from . import reliability as rel
from . import retry as rt
from .extract import Direction, default_params, extract_failures, simple_failure_ranges
from .severity import SeverityDirection, SeverityScale, fit_scale
from .stl import default_config
from .timeseries import FillPolicy, Resample, Unit, fill_missing, resample
from .traceio import (
    CuaTrace,
    ReportFormat,
    TraceFormatError,
    Vantage,
    atomic_write_text,
    ingest_operator_reports,
    ingest_user_reports,
    operator_reports_to_trace,
    parse_timestamp,
    ranges_to_trace,
    read_cua,
    write_cua,
)

SOURCES = {
    "reports": (ReportFormat.TIMESTAMP_COUNT, Unit.USER_REPORTS, Vantage.USER_REPORTS),
    "reports-reason": (ReportFormat.TIMESTAMP_COUNT_REASON, Unit.USER_REPORTS, Vantage.USER_REPORTS),
    "players": (ReportFormat.TIMESTAMP_COUNT, Unit.ONLINE_PLAYERS, Vantage.PLAYER_COUNTS),
    "operator": (None, None, Vantage.OPERATOR_REPORTS),
}


class CliError(Exception):
    pass


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    atomic_write_text(path, text)
    return path


def _json_text(obj) -> str:
    def clean(v):
        if isinstance(v, float) and math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if isinstance(v, float) and math.isnan(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"input file not found: {p}")
    return p


# extract --------------------------------------------------------------------


def _extract_ranges(ts, args):
    if not len(ts) or not ts.values.any():
        return [], None
    direction = Direction(args.direction) if args.direction else None
    overrides = {}
    for flag, name in [
        ("window", "window_w"),
        ("nsigma", "nsigma_n"),
        ("diff_threshold", "diff_threshold_d"),
        ("drop_threshold", "drop_threshold_s"),
        ("regain", "regain_fraction_r"),
        ("combine", "combine"),
    ]:
        value = getattr(args, flag)
        if value is not None:
            overrides[name] = value
    params = default_params(ts, direction, **overrides)
    method = args.method
    if method == "auto":
        method = "simple" if ts.unit is Unit.USER_REPORTS else "peaks"
    if method == "simple":
        return simple_failure_ranges(ts), params.direction
    if len(ts) < params.window_w:
        return [], params.direction
    cfg = None if args.no_stl or len(ts) < 4 else default_config(ts)
    return extract_failures(ts, params, cfg), params.direction


def _scale(summits, direction):
    sev_dir = (
        SeverityDirection.PLAYERS_DOWN if direction is Direction.DROP_DOWN else SeverityDirection.REPORTS_UP
    )
    if not summits:
        return None
    if len(summits) == 1:
        return SeverityScale(summits[0], summits[0], sev_dir)
    return fit_scale(summits, sev_dir)


def cmd_extract(args) -> int:
    fmt, unit, vantage = SOURCES[args.source]
    out_dir = Path(args.out_dir)
    paths = [_existing(p) for p in args.inputs]
    if args.service and len(paths) > 1:
        raise CliError("--service can only be used with a single input")

    if args.source == "operator":
        for path in paths:
            service = args.service or path.stem
            trace = operator_reports_to_trace(ingest_operator_reports(path), args.total_services, service)
            out = write_cua(trace, out_dir)
            print(f"{service}: {len(trace)} failures -> {out}")
        return 0

    jobs = []
    for path in paths:
        ts = ingest_user_reports(path, fmt, args.interval, unit)
        if args.resample and len(ts):
            ts = resample(ts, args.resample, Resample.SUM if unit is Unit.USER_REPORTS else Resample.MEAN)
        if ts.has_missing:
            ts = fill_missing(ts, policy=FillPolicy(args.fill))
        ranges, direction = _extract_ranges(ts, args)
        jobs.append((path, ts, ranges, direction))

    pooled = None
    if args.pooled_scale:
        summits = [r.summit for _, _, ranges, _ in jobs for r in ranges]
        direction = next((d for *_, d in jobs if d is not None), None)
        pooled = _scale(summits, direction)

    for path, ts, ranges, direction in jobs:
        service = args.service or path.stem
        scale = pooled or _scale([r.summit for r in ranges], direction)
        trace = ranges_to_trace(ranges, ts, scale, service, vantage)
        out = write_cua(trace, out_dir)
        summary = rel.summarize(trace)
        print(
            f"{service}: {len(trace)} failures -> {out}"
            + (f" (MFD {summary.mfd:g}s)" if summary.mfd is not None else "")
        )
    return 0


# stats / weekly -------------------------------------------------------------

STATS_HEADER = [
    "service", "vantage", "n_failures", "mtbf", "ttbf", "mfd", "tfd",
    "pearson_severity_duration", "tbf_small_sample", "duration_small_sample",
]


def _load_traces(paths, lenient) -> list[CuaTrace]:
    return [read_cua(_existing(p), lenient=lenient) for p in paths]


def _trace_label(trace: CuaTrace) -> str:
    return f"{trace.service}_{trace.vantage.value}"


def cmd_stats(args) -> int:
    traces = _load_traces(args.inputs, args.lenient)
    out_dir = Path(args.out_dir)
    rows, records = [], []
    for tr in traces:
        s = rel.summarize(tr)
        _, r = rel.severity_duration_scatter(tr)
        row = [tr.service, tr.vantage.value, s.n_failures, s.mtbf, s.ttbf, s.mfd, s.tfd, r,
               s.tbf_small_sample, s.duration_small_sample]
        rows.append(row)
        records.append(dict(zip(STATS_HEADER, row)))
    path = _write(out_dir, "stats.csv", _csv_text(STATS_HEADER, rows))
    _write(out_dir, "stats.json", _json_text(records))
    print(f"wrote {path}")
    for row in rows:
        print("  " + ", ".join(f"{k}={_fmt(v)}" for k, v in zip(STATS_HEADER, row)))

    if args.ecdf:
        ecdf_rows = [
            (tr.service, tr.vantage.value, v, f)
            for tr in traces
            for v, f in rel.ecdf([e.severity for e in tr.events])
        ]
        _write(out_dir, "severity_ecdf.csv",
               _csv_text(["service", "vantage", "severity", "cumulative_fraction"], ecdf_rows))
    if args.scatter:
        sc_rows = [
            (tr.service, tr.vantage.value, s, d)
            for tr in traces
            for s, d in rel.severity_duration_scatter(tr)[0]
        ]
        _write(out_dir, "severity_duration.csv",
               _csv_text(["service", "vantage", "severity", "duration"], sc_rows))
    if args.weekly:
        _write_weekly(traces, out_dir, args.timezone_shift)
    return 0


def _write_weekly(traces, out_dir, shift) -> Path:
    hists = [rel.weekly_histogram(tr, shift) for tr in traces]
    header = ["hour_of_week"] + [_trace_label(tr) for tr in traces]
    rows = [[h] + [float(hist[h]) for hist in hists] for h in range(rel.HOURS_PER_WEEK)]
    return _write(out_dir, "weekly.csv", _csv_text(header, rows))


def cmd_weekly(args) -> int:
    traces = _load_traces(args.inputs, args.lenient)
    path = _write_weekly(traces, Path(args.out_dir), args.timezone_shift)
    print(f"wrote {path}")
    return 0


# sim-checkpoint -------------------------------------------------------------


def read_workload(path) -> list[ck.Task]:
    tasks = []
    with open(_existing(path), newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                tasks.append(ck.Task(row["id"], float(row["submit_time"]), float(row["duration"]),
                                     int(row.get("cores") or 1)))
            except (KeyError, ValueError, TypeError) as exc:
                raise CliError(f"{path}: row {rowno}: {exc}") from None
    return tasks


def read_carbon(path) -> ck.CarbonTrace:
    epochs, values = [], []
    with open(_existing(path), newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                epochs.append(parse_timestamp(row["epoch"]))
                values.append(float(row["gco2_per_kwh"]))
            except (KeyError, ValueError) as exc:
                raise CliError(f"{path}: row {rowno}: {exc}") from None
    return ck.CarbonTrace(tuple(epochs), tuple(values))


RUN_HEADER = ["workload", "trace", "model", "offset", "runtime", "mean_task_delay",
              "tasks_terminated", "energy", "carbon"]
METRICS = ["runtime", "mean_task_delay", "tasks_terminated", "energy", "carbon"]


def cmd_sim_checkpoint(args) -> int:
    if args.carbon is None and args.constant_intensity is None:
        raise CliError("no carbon trace given: pass --carbon FILE or --constant-intensity G_PER_KWH")
    carbon = read_carbon(args.carbon) if args.carbon else None
    workloads = {Path(p).stem: read_workload(p) for p in args.workload}
    traces = {}
    for p in args.cua:
        tr = read_cua(_existing(p), lenient=args.lenient)
        traces[_trace_label(tr)] = tr
    models = [ck.CheckpointModel.parse(m, args.snapshot_cost) for m in args.models.split(",") if m]
    if not models:
        raise CliError("no checkpoint models given")
    cluster = ck.ClusterConfig(args.hosts, args.cores_per_host, args.idle_watts, args.max_watts)
    cells = ck.sweep(
        workloads, traces, models, cluster, offsets=args.offsets, max_workers=args.workers,
        carbon_trace=carbon, constant_intensity=args.constant_intensity, seed=args.seed,
        horizon_factor=args.horizon_factor, max_failures=args.max_failures,
    )
    runs, summary = [], []
    for cell in cells:
        for off, rep in zip(cell.offsets, cell.reports):
            m = rep.metrics()
            runs.append([cell.workload, cell.trace, cell.model, float(off)] + [m[k] for k in METRICS])
        mean, std = cell.mean(), cell.std()
        summary.append([cell.workload, cell.trace, cell.model, len(cell.reports)]
                       + [mean[k] for k in METRICS] + [std[k] for k in METRICS])
    out_dir = Path(args.out_dir)
    _write(out_dir, "checkpoint_runs.csv", _csv_text(RUN_HEADER, runs))
    header = (["workload", "trace", "model", "runs"] + [f"{k}_mean" for k in METRICS]
              + [f"{k}_std" for k in METRICS])
    _write(out_dir, "checkpoint_summary.csv", _csv_text(header, summary))
    # wide view: one column per model, one row per workload/trace/metric
    names = [m.name for m in models]
    by_key = {(c.workload, c.trace, c.model): c.mean() for c in cells}
    pairs = list(dict.fromkeys((c.workload, c.trace) for c in cells))
    table = [[w, tr, k] + [by_key[(w, tr, m)][k] for m in names] for w, tr in pairs for k in METRICS]
    path = _write(out_dir, "checkpoint_table.csv", _csv_text(["workload", "trace", "metric"] + names, table))
    print(f"wrote {path} ({len(cells)} cells, {len(runs)} runs)")
    return 0


# sim-retry ------------------------------------------------------------------


def _histogram_text(outcome: rt.RetryOutcome) -> str:
    rows = [[k, int(c)] for k, c in enumerate(outcome.histogram)] + [["failed", outcome.failed]]
    return _csv_text(["retries", "count"], rows)


def _probability_trace(args, diurnal) -> rt.FailureProbabilityTrace:
    if bool(args.reports) == bool(args.cua):
        raise CliError("give exactly one of --reports or --cua")
    if args.reports:
        ts = ingest_user_reports(_existing(args.reports), interval=args.interval)
        if not len(ts):
            raise CliError(f"{args.reports}: no report rows")
        if ts.has_missing:
            ts = fill_missing(ts, policy=FillPolicy(args.fill))
        if ts.interval != rt.INTERVAL:
            ts = resample(ts, rt.INTERVAL, Resample.SUM)
        return rt.trace_to_probabilities(ts, diurnal)
    tr = read_cua(_existing(args.cua), lenient=args.lenient)
    if not tr.events:
        raise CliError(f"{args.cua}: trace has no failures")
    start = tr.events[0].start // rt.INTERVAL * rt.INTERVAL
    n = -(-(tr.events[-1].end - start) // rt.INTERVAL)
    if args.intervals:
        n = args.intervals
    return rt.trace_from_events(tr.events, start, n)


def cmd_sim_retry(args) -> int:
    graph = rt.ServiceGraph(rt.Structure(args.structure), args.size, args.max_retries)
    diurnal = rt.DiurnalModel(args.diurnal_offset, args.diurnal_amplitude, args.diurnal_phase)
    trace = _probability_trace(args, diurnal)
    out_dir = Path(args.out_dir)
    kw = dict(requests_per_interval=args.requests, arrival=diurnal, seed=args.seed)
    if args.baseline_p is None:
        outcome = rt.simulate_trace(graph, trace, **kw)
    else:
        cmp = rt.compare_baseline(graph, trace, args.baseline_p, **kw)
        outcome = cmp.trace
        _write(out_dir, "retry_baseline_histogram.csv", _histogram_text(cmp.baseline))
        _write(out_dir, "retry_comparison.json", _json_text(cmp.as_dict()))
        print(f"retry ratio {cmp.retry_ratio:g}, failure ratio {cmp.failure_ratio:g}")
    path = _write(out_dir, "retry_histogram.csv", _histogram_text(outcome))
    print(f"wrote {path} ({outcome.requests} requests, {outcome.failed} failed)")
    return 0


# parser ---------------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--timezone-shift", type=int, default=0,
                   help="hours added to timestamps for hour-of-week output only")
    p.add_argument("--lenient", action="store_true", help="merge overlapping CUA failures on read")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cua", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="raw source files -> CUA traces")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--source", choices=sorted(SOURCES), default="reports")
    p.add_argument("--service")
    p.add_argument("--interval", type=int, default=1200, help="source cadence in seconds")
    p.add_argument("--resample", type=int, help="aggregate to this interval before extraction")
    p.add_argument("--fill", choices=[f.value for f in FillPolicy], default="zero")
    p.add_argument("--method", choices=["auto", "peaks", "simple"], default="auto",
                   help="peak detection, or runs of non-zero reports (auto: runs for report sources)")
    p.add_argument("--no-stl", action="store_true")
    p.add_argument("--direction", choices=[d.value for d in Direction])
    p.add_argument("--window", type=int)
    p.add_argument("--nsigma", type=float)
    p.add_argument("--diff-threshold", type=float)
    p.add_argument("--drop-threshold", type=float)
    p.add_argument("--regain", type=float)
    p.add_argument("--combine", choices=["and", "or"])
    p.add_argument("--pooled-scale", action="store_true",
                   help="fit one severity scale over all inputs")
    p.add_argument("--total-services", type=int, default=1,
                   help="operator sources: number of services the operator runs")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stats", help="MTBF/TTBF/MFD/TFD and severity statistics")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--weekly", action="store_true")
    p.add_argument("--ecdf", action="store_true")
    p.add_argument("--scatter", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("weekly", help="hour-of-week failure fractions")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_weekly)

    p = sub.add_parser("sim-checkpoint", help="checkpointing sweep over workloads and traces")
    _common(p)
    p.add_argument("--workload", action="append", required=True)
    p.add_argument("--cua", action="append", required=True)
    p.add_argument("--hosts", type=int, default=8)
    p.add_argument("--cores-per-host", type=int, default=4)
    p.add_argument("--idle-watts", type=float, default=100.0)
    p.add_argument("--max-watts", type=float, default=250.0)
    p.add_argument("--models", default=",".join(m.name for m in ck.DEFAULT_MODELS))
    p.add_argument("--snapshot-cost", type=float, default=60.0)
    p.add_argument("--offsets", type=int, default=5)
    p.add_argument("--carbon")
    p.add_argument("--constant-intensity", type=float)
    p.add_argument("--max-failures", type=int, default=ck.MAX_FAILURES)
    p.add_argument("--horizon-factor", type=float, default=10.0)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sim_checkpoint)

    p = sub.add_parser("sim-retry", help="retry distribution under a failure trace")
    _common(p)
    p.add_argument("--structure", choices=[s.value for s in rt.Structure], default="chain")
    p.add_argument("--size", "--depth", "--width", dest="size", type=int, default=1)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--reports")
    p.add_argument("--cua")
    p.add_argument("--intervals", type=int)
    p.add_argument("--interval", type=int, default=1200)
    p.add_argument("--fill", choices=[f.value for f in FillPolicy], default="zero")
    p.add_argument("--requests", type=int, default=10_000)
    p.add_argument("--baseline-p", type=float)
    p.add_argument("--diurnal-offset", type=float, default=1.0)
    p.add_argument("--diurnal-amplitude", type=float, default=0.5)
    p.add_argument("--diurnal-phase", type=float, default=rt.DiurnalModel().phase)
    p.set_defaults(func=cmd_sim_retry)
    return parser


def load_config(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    config = load_config(_existing(args.config))
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in config.items():
        action = known.get(key)
        if action is None:
            raise CliError(f"{args.config}: unknown option {key!r} for {args.command}")
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [v.strip() for v in raw.split(",")]
        else:
            defaults[key] = action.type(raw) if action.type else raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if getattr(args, "structure", None) is not None and args.size < 1:
            raise CliError(f"--size must be >= 1, got {args.size}")
        return args.func(args)
    except (CliError, TraceFormatError, ValueError, OSError,
            ck.SimulationHorizonError, ck.CarbonCoverageError, ck.InvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
