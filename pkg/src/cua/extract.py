"""Failure extraction from report counts and player counts.

Two stages: anomalous points are marked on the detrended signal with a
rolling-window test plus a first-order-difference test, then each anchor is
expanded backwards to the preceding sharp jump and forwards until the signal
recovers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .stl import StlConfig, stl_values
from .timeseries import TimeSeries, Unit


class Direction(enum.Enum):
    SPIKE_UP = "up"
    DROP_DOWN = "down"


@dataclass(frozen=True)
class PeakParams:
    window_w: int
    nsigma_n: float = 3.0
    diff_threshold_d: float = 0.0
    drop_threshold_s: float = 0.0
    regain_fraction_r: float = 0.9
    direction: Direction = Direction.SPIKE_UP
    # "and": both the N-sigma and the difference test must fire; "or": either
    combine: str = "and"
    # window statistics over the W samples ending at (True) or just before (False) the point
    include_current: bool = False

    def __post_init__(self):
        if self.window_w < 2:
            raise ValueError(f"window_w must be >= 2, got {self.window_w}")
        if self.nsigma_n <= 0:
            raise ValueError(f"nsigma_n must be positive, got {self.nsigma_n}")
        if not 0 < self.regain_fraction_r <= 1:
            raise ValueError(f"regain_fraction_r must lie in (0, 1], got {self.regain_fraction_r}")
        if self.combine not in ("and", "or"):
            raise ValueError(f"combine must be 'and' or 'or', got {self.combine!r}")


@dataclass(frozen=True)
class FailureRange:
    """Inclusive sample range of one failure.

    ``summit`` is the extreme raw value inside the range in the failure
    direction: the maximum for report spikes, the minimum for player drops.
    """

    start_index: int
    end_index: int
    summit: float

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError(f"start_index {self.start_index} > end_index {self.end_index}")


def default_direction(unit: Unit) -> Direction:
    return Direction.DROP_DOWN if unit is Unit.ONLINE_PLAYERS else Direction.SPIKE_UP


def default_params(ts: TimeSeries, direction: Direction | None = None, **overrides) -> PeakParams:
    """W = one day of samples, N = 3, D = 10% and S = 20% of the series max, R = 0.9."""
    peak = float(ts.values.max()) if len(ts) else 0.0
    params = PeakParams(
        window_w=max(2, 86400 // ts.interval),
        nsigma_n=3.0,
        diff_threshold_d=0.1 * peak,
        drop_threshold_s=0.2 * peak,
        regain_fraction_r=0.9,
        direction=direction or default_direction(ts.unit),
    )
    return replace(params, **overrides) if overrides else params


def _summit(raw, start, end, direction):
    seg = raw[start : end + 1]
    return float(seg.min() if direction is Direction.DROP_DOWN else seg.max())


def simple_failure_ranges(ts: TimeSeries) -> list[FailureRange]:
    """Maximal runs of strictly positive samples."""
    if ts.has_missing:
        raise ValueError("series has missing samples; fill them first")
    v = ts.values
    positive = np.concatenate([[False], v > 0, [False]]).astype(np.int8)
    edges = np.diff(positive)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [FailureRange(int(s), int(e), float(v[s : e + 1].max())) for s, e in zip(starts, ends)]


def mark_anomalous_points(deseasonalized, raw, p: PeakParams) -> list[int]:
    """Indices that are N sigma beyond their rolling-window mean and jump by more than D.

    Over a flat window only the difference test on ``raw`` applies.
    """
    x = np.asarray(deseasonalized, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if x.shape != raw.shape:
        raise ValueError("deseasonalized and raw series must have equal length")
    w = p.window_w
    n = x.size
    if n < w:
        raise ValueError(f"series length {n} is shorter than the window {w}")
    if n == w and not p.include_current:
        return []

    if p.include_current:
        windows = np.lib.stride_tricks.sliding_window_view(x, w)  # row k ends at k+w-1
        first = w - 1
    else:
        windows = np.lib.stride_tricks.sliding_window_view(x, w)[:-1]  # row k: x[k : k+w]
        first = w
    mean = windows.mean(axis=1)
    std = windows.std(axis=1)
    cur = x[first:]
    diff = raw[first:] - raw[first - 1 : -1]
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))

    if p.direction is Direction.DROP_DOWN:
        sigma_hit = cur < mean - p.nsigma_n * std
        diff_hit = diff < -p.diff_threshold_d
    else:
        sigma_hit = cur > mean + p.nsigma_n * std
        diff_hit = diff > p.diff_threshold_d

    if p.combine == "and":
        hit = np.where(flat, diff_hit, sigma_hit & diff_hit)
    else:
        hit = np.where(flat, diff_hit, sigma_hit | diff_hit)
    return [int(i) + first for i in np.flatnonzero(hit)]


def expand_to_failure(anchor: int, raw, p: PeakParams) -> FailureRange:
    """Grow one anomalous point into a failure range.

    The start walks back until the first jump of magnitude >= S. A drop ends
    at the first sample that regains R of the pre-failure baseline; a spike
    ends at the last sample before reports fall to (1 - R) of the running
    summit. Without recovery the range runs to the last sample.
    """
    raw = np.asarray(raw, dtype=float)
    n = raw.size
    if not 0 <= anchor < n:
        raise IndexError(f"anchor {anchor} outside series of length {n}")

    start = anchor
    while start > 0 and abs(raw[start] - raw[start - 1]) < p.drop_threshold_s:
        start -= 1

    end = n - 1
    if p.direction is Direction.DROP_DOWN:
        baseline = raw[start - 1] if start > 0 else raw[start]
        target = p.regain_fraction_r * baseline
        after = np.flatnonzero(raw[anchor + 1 :] >= target)
        if after.size:
            end = anchor + 1 + int(after[0])
    else:
        running = np.maximum.accumulate(raw[start:])
        k = np.arange(start, n)
        below = (k > anchor) & (raw[start:] <= (1.0 - p.regain_fraction_r) * running)
        hits = np.flatnonzero(below)
        if hits.size:
            end = int(k[hits[0]]) - 1
    return FailureRange(start, end, _summit(raw, start, end, p.direction))


def merge_ranges(ranges, raw, direction: Direction) -> list[FailureRange]:
    """Union of overlapping or adjacent ranges; summits recomputed."""
    merged: list[list[int]] = []
    for r in sorted(ranges, key=lambda r: (r.start_index, r.end_index)):
        if merged and r.start_index <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], r.end_index)
        else:
            merged.append([r.start_index, r.end_index])
    raw = np.asarray(raw, dtype=float)
    return [FailureRange(s, e, _summit(raw, s, e, direction)) for s, e in merged]


def extract_failures(
    ts: TimeSeries, p: PeakParams | None = None, stl_cfg: StlConfig | None = None
) -> list[FailureRange]:
    """Detrend with STL (when configured), mark anchors, expand and merge."""
    if ts.has_missing:
        raise ValueError("series has missing samples; fill them first")
    if p is None:
        p = default_params(ts)
    raw = ts.values
    if raw.size < p.window_w or not raw.any():
        return []
    signal = stl_values(raw, stl_cfg).remainder if stl_cfg is not None else raw
    anchors = mark_anomalous_points(signal, raw, p)
    ranges = [expand_to_failure(a, raw, p) for a in anchors]
    return merge_ranges(ranges, raw, p.direction)
