"""Regenerate the small synthetic inputs under tests/data, and the CLI goldens.

    python3 scripts/make_fixtures.py [--out tests/data] [--goldens]

Goldens are the outputs of a verified run; regenerate them only after a
deliberate behaviour change and review the diff.
"""
import argparse
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

START = 1_600_000_000 - 1_600_000_000 % 86400  # midnight UTC
INTERVAL = 1200
DAY = 86400


def reports(rng, days=7):
    n = days * DAY // INTERVAL
    # outage-report sites log nothing while a service is healthy
    counts = np.zeros(n, dtype=int)
    for start, length, height in [(150, 6, 180), (300, 3, 60), (420, 12, 400)]:
        counts[start : start + length] = 1 + rng.poisson(height, length)
    return [(START + i * INTERVAL, int(c)) for i, c in enumerate(counts)]


def players(rng, days=7):
    n = days * DAY // INTERVAL
    t = np.arange(n)
    v = 5000 * (1 + 0.3 * np.sin(2 * np.pi * t / (DAY // INTERVAL))) * (1 + 0.01 * rng.standard_normal(n))
    for start, length in [(120, 8), (380, 4)]:
        v[start : start + length] *= 0.05
    return [(START + i * INTERVAL, int(round(x))) for i, x in enumerate(v)]


def write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--goldens", action="store_true", help="also refresh tests/data/golden")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    write_rows(out / "reports_webshop.csv", "timestamp,count", reports(rng))
    write_rows(out / "players_arena.csv", "timestamp,count", players(rng))
    write_rows(out / "operator_cloud.csv", "start,end,label,services,description", [
        (START + 3600, START + 7200, "minor", "api;auth", "elevated errors"),
        (START + 5400, START + 9000, "major", "api", "api outage"),
        (START + 2 * DAY, START + 2 * DAY + 1800, "maintenance", "db", "planned upgrade"),
    ])
    write_rows(out / "workload_small.csv", "id,submit_time,duration,cores", [
        (f"t{i:02d}", 0 if i < 10 else 600 * i, int(rng.integers(600, 3601)), int(rng.integers(1, 3)))
        for i in range(20)
    ])
    hours = 24 * 14
    intensity = 300 + 120 * np.sin(2 * np.pi * np.arange(hours) / 24)
    write_rows(out / "carbon_grid.csv", "epoch,gco2_per_kwh",
               [(START + 3600 * h, f"{x:.1f}") for h, x in enumerate(intensity)])
    # dense failure trace used by the checkpoint fixtures
    events = [(START + h * 7200, START + h * 7200 + 900, 0.5) for h in range(12)]
    write_rows(out / "cua_dense_userreports.csv", "start_time,end_time,severity",
               [(s, e, f"{v:.6f}") for s, e, v in events])
    if args.goldens:
        write_goldens(out)


def write_goldens(data):
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
    from golden_runs import RUNS, argv

    from cua.cli import main as cli

    golden = data / "golden"
    golden.mkdir(exist_ok=True)
    for run in RUNS:  # in order: later runs read earlier goldens
        with tempfile.TemporaryDirectory() as tmp:
            if cli(argv(run, tmp, data)) != 0:
                raise SystemExit(f"golden run {run[0]} failed")
            for name in run[2]:
                shutil.copyfile(Path(tmp) / name, golden / name)


if __name__ == "__main__":
    main()
