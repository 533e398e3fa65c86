"""Checkpointing models against synthetic or recorded failure traces.

    python3 scripts/checkpoint_experiment.py [--cua FILE ...] [--lengths 3600 14400]
        [--tasks 100] [--seeds 3] [--out checkpoint_experiment.csv]

Without --cua, each seed draws a trace with exponential gaps whose mean is
twice the task length (600 s outages at severity 0.6). Prints the mean
makespan of every model relative to running without checkpoints.
"""
import argparse
import csv
import sys

import numpy as np

from cua import checkpoint as ck
from cua.traceio import read_cua, trace_from_rows


def synthetic_trace(seed, length, outage=600, severity=0.6, count=300):
    rng = np.random.default_rng(seed)
    rows, t = [], 0
    for _ in range(count):
        rows.append((t, t + outage, severity))
        t += outage + 1 + int(rng.exponential(2 * length))
    return trace_from_rows(rows, f"synthetic{seed}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cua", nargs="*", default=[])
    ap.add_argument("--lengths", nargs="+", type=float, default=[3600.0, 14400.0])
    ap.add_argument("--tasks", type=int, default=100)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--hosts", type=int, default=8)
    ap.add_argument("--cores-per-host", type=int, default=4)
    ap.add_argument("--intensity", type=float, default=300.0, help="constant gCO2/kWh")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="checkpoint_experiment.csv")
    args = ap.parse_args(argv)

    cluster = ck.ClusterConfig(args.hosts, args.cores_per_host)
    rows = []
    for length in args.lengths:
        workload = [ck.Task(f"t{i:03d}", 0.0, length) for i in range(args.tasks)]
        if args.cua:
            traces = {f"{t.service}_{t.vantage.value}": t for t in map(read_cua, args.cua)}
        else:
            traces = {f"seed{s}": synthetic_trace(s, length) for s in range(args.seeds)}
        cells = ck.sweep({f"L{length:g}": workload}, traces, ck.DEFAULT_MODELS, cluster,
                         max_workers=args.workers, constant_intensity=args.intensity)
        base = {c.trace: c.mean()["runtime"] for c in cells if c.model == "none"}
        for c in cells:
            m = c.mean()
            rows.append([c.workload, c.trace, c.model, f"{m['runtime']:.1f}",
                         f"{m['runtime'] / base[c.trace]:.4f}", f"{m['tasks_terminated']:.1f}",
                         f"{m['energy']:.1f}", f"{m['carbon']:.3f}"])

    header = ["workload", "trace", "model", "runtime", "runtime_vs_none", "terminated", "energy_j", "carbon_g"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    width = max(len(r[2]) for r in rows)
    for r in rows:
        print(f"{r[0]:>8} {r[1]:>12} {r[2]:<{width}} runtime {r[3]:>10}  x{r[4]}  terminated {r[5]}")
    print(f"wrote {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
