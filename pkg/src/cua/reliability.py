"""Reliability characterization of CUA traces.

Median and P95 of the time between failures and of the failure duration,
hour-of-week occurrence histograms, severity ECDFs and the
severity-duration correlation.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .quantiles import median, percentile
from .traceio import CuaTrace

HOURS_PER_WEEK = 168
SMALL_SAMPLE = 20
# 1970-01-01 was a Thursday: 72 hours after Monday 00:00
_EPOCH_HOUR_OF_WEEK = 72


@dataclass(frozen=True)
class ReliabilitySummary:
    """Durations in seconds; ``None`` where a statistic is undefined.

    With fewer than 20 samples the tail (P95) value is the sample maximum and
    the matching ``*_small_sample`` flag is set.
    """

    n_failures: int
    mtbf: float | None = None
    ttbf: float | None = None
    mfd: float | None = None
    tfd: float | None = None
    tbf_small_sample: bool = False
    duration_small_sample: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def _tail(values):
    if len(values) < SMALL_SAMPLE:
        return float(max(values)), True
    return percentile(values, 95), False


def time_between_failures(trace: CuaTrace) -> list[int]:
    ev = trace.events
    return [b.start - a.end for a, b in zip(ev, ev[1:])]


def durations(trace: CuaTrace) -> list[int]:
    return [e.end - e.start for e in trace.events]


def summarize(trace: CuaTrace) -> ReliabilitySummary:
    if not trace.events:
        return ReliabilitySummary(n_failures=0)
    dur = durations(trace)
    tfd, dur_small = _tail(dur)
    fields = dict(mfd=median(dur), tfd=tfd, duration_small_sample=dur_small)
    tbf = time_between_failures(trace)
    if tbf:
        ttbf, tbf_small = _tail(tbf)
        fields.update(mtbf=median(tbf), ttbf=ttbf, tbf_small_sample=tbf_small)
    return ReliabilitySummary(n_failures=len(trace.events), **fields)


def hour_of_week(epoch: int, shift_hours: int = 0) -> int:
    """Monday 00:00 UTC is hour 0."""
    return (epoch // 3600 + _EPOCH_HOUR_OF_WEEK + shift_hours) % HOURS_PER_WEEK


def weekly_histogram(trace: CuaTrace, shift_hours: int = 0) -> np.ndarray:
    """Fraction of failures starting in each hour of the week."""
    bins = np.zeros(HOURS_PER_WEEK)
    for e in trace.events:
        bins[hour_of_week(e.start, shift_hours)] += 1
    total = bins.sum()
    return bins / total if total else bins


def ecdf(values) -> list[tuple[float, float]]:
    values = [float(v) for v in values]
    n = len(values)
    out, seen = [], 0
    for v, c in sorted(Counter(values).items()):
        seen += c
        out.append((v, seen / n))
    return out


def pearson(xs, ys) -> float | None:
    """Product-moment correlation, ``None`` when either side has zero variance."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError("xs and ys must have equal length")
    if x.size < 2:
        raise ValueError("at least two pairs are required")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        return None
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def severity_duration_scatter(trace: CuaTrace):
    pairs = [(e.severity, float(e.end - e.start)) for e in trace.events]
    if len(pairs) < 2:
        return pairs, None
    sev, dur = zip(*pairs)
    return pairs, pearson(sev, dur)
