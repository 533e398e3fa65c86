"""Seasonal-trend decomposition by loess (additive, single period).

The inner/outer loop structure and the loess estimator follow Cleveland,
Cleveland, McRae & Terpenning (1990). All smoothers are locally linear.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .timeseries import TimeSeries

SEASONALITY_THRESHOLD = 0.3


@dataclass(frozen=True)
class StlConfig:
    period: int | None
    seasonal_smoother: int = 7
    trend_smoother: int | None = None
    lowpass_smoother: int | None = None
    inner_iterations: int = 2
    robust_iterations: int = 1

    def __post_init__(self):
        if self.period is not None and self.period < 2:
            raise ValueError(f"period must be >= 2, got {self.period}")
        if self.period is None and self.trend_smoother is None:
            raise ValueError("trend_smoother is required when no period is given")
        for name in ("seasonal_smoother", "trend_smoother", "lowpass_smoother"):
            w = getattr(self, name)
            if w is not None and (w < 3 or w % 2 == 0):
                raise ValueError(f"{name} must be an odd integer >= 3, got {w}")
        if self.inner_iterations < 1 or self.robust_iterations < 0:
            raise ValueError("inner_iterations must be >= 1 and robust_iterations >= 0")

    @property
    def trend_window(self) -> int:
        if self.trend_smoother is not None:
            return self.trend_smoother
        return default_trend_window(self.period, self.seasonal_smoother)

    @property
    def lowpass_window(self) -> int:
        if self.lowpass_smoother is not None:
            return self.lowpass_smoother
        return _next_odd(self.period)


@dataclass(frozen=True, eq=False)
class StlResult:
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    weights: np.ndarray


def _next_odd(x: float) -> int:
    n = int(np.ceil(x))
    return max(3, n if n % 2 else n + 1)


def default_trend_window(period: int, seasonal_smoother: int = 7) -> int:
    """Smallest odd integer >= 1.5 * period / (1 - 1.5 / seasonal_smoother)."""
    return _next_odd(1.5 * period / (1.0 - 1.5 / seasonal_smoother))


def _loess_at(y, xs, nleft, q, rw=None):
    """Local linear fit of ``y`` (at positions 0..n-1) evaluated at ``xs``.

    ``nleft`` is the first index of each evaluation's neighbourhood; the
    neighbourhood spans ``min(q, n)`` points. Returns ``(values, ok)``; ``ok``
    is False where every weight vanished.
    """
    n = y.size
    span = min(q, n)
    xs = np.asarray(xs, dtype=float)
    nleft = np.asarray(nleft, dtype=np.int64)
    idx = nleft[:, None] + np.arange(span)[None, :]
    xj = idx.astype(float)
    h = np.maximum(xs - nleft, nleft + span - 1 - xs)
    if q > n:
        h = h + (q - n) // 2
    h = h[:, None]
    r = np.abs(xj - xs[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(r <= 0.001 * h, 1.0, (1.0 - (r / h) ** 3) ** 3)
    w = np.where(r <= 0.999 * h, w, 0.0)
    if rw is not None:
        w = w * rw[idx]
    a = w.sum(axis=1)
    ok = a > 0
    w = np.divide(w, a[:, None], out=np.zeros_like(w), where=ok[:, None])

    xbar = (w * xj).sum(axis=1)
    dev = xj - xbar[:, None]
    c = (w * dev**2).sum(axis=1)
    fit_slope = (h[:, 0] > 0) & (np.sqrt(c) > 0.001 * (n - 1))
    slope = np.divide(xs - xbar, c, out=np.zeros_like(c), where=fit_slope)
    w = w * (1.0 + slope[:, None] * dev)
    return (w * y[idx]).sum(axis=1), ok


def _smooth(y, q, rw=None):
    n = y.size
    i = np.arange(n)
    if q >= n:
        nleft = np.zeros(n, dtype=np.int64)
    else:
        nleft = np.clip(i - (q - 1) // 2, 0, n - q)
    out, ok = _loess_at(y, i, nleft, q, rw)
    out[~ok] = y[~ok]
    return out


def loess_smooth(values, window: int, degree: int = 1, weights=None) -> np.ndarray:
    """Locally linear loess over the ``window`` nearest samples of each index.

    Neighbour weights are tricube in distance (scaled by the farthest
    neighbour) times the optional robustness ``weights``.
    """
    y = np.asarray(values, dtype=float)
    if degree != 1:
        raise ValueError("only locally linear (degree 1) loess is supported")
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    if window > y.size:
        raise ValueError(f"window {window} exceeds series length {y.size}")
    rw = None
    if weights is not None:
        rw = np.asarray(weights, dtype=float)
        if rw.shape != y.shape:
            raise ValueError("weights must have the same length as values")
        if np.any(rw < 0):
            raise ValueError("weights must be non-negative")
    return _smooth(y, window, rw)


def _cycle_subseries(w, period, ns, rw):
    """Smooth each cycle-subseries and extend it by one cycle at both ends."""
    n = w.size
    out = np.empty(n + 2 * period)
    for j in range(period):
        sub = w[j::period]
        k = sub.size
        sub_rw = None if rw is None else rw[j::period]
        smoothed = _smooth(sub, ns, sub_rw)
        left_n = 0
        right_n = max(0, k - ns)
        ends, ok = _loess_at(sub, [-1.0, float(k)], [left_n, right_n], ns, sub_rw)
        first = ends[0] if ok[0] else smoothed[0]
        last = ends[1] if ok[1] else smoothed[-1]
        ext = np.concatenate([[first], smoothed, [last]])
        out[j::period][: k + 2] = ext
    return out


def _moving_average(x, length):
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[length:] - c[:-length]) / length


def _lowpass(c, period, nl):
    x = _moving_average(c, period)
    x = _moving_average(x, period)
    x = _moving_average(x, 3)
    return _smooth(x, nl)


def _robustness_weights(resid):
    r = np.abs(resid)
    cmad = 6.0 * np.median(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(r <= 0.001 * cmad, 1.0, (1.0 - (r / cmad) ** 2) ** 2)
    return np.where(r <= 0.999 * cmad, w, 0.0)


def stl_values(y, cfg: StlConfig) -> StlResult:
    y = np.asarray(y, dtype=float)
    n = y.size
    period = cfg.period
    if period is not None and n < 2 * period:
        raise ValueError(
            f"series of length {n} is too short for period {period}; "
            f"at least {2 * period} samples are required"
        )
    if period is None and n < 2:
        raise ValueError(f"series of length {n} is too short; at least 2 samples are required")
    nt = cfg.trend_window
    trend = np.zeros(n)
    season = np.zeros(n)
    rw = None
    for outer in range(cfg.robust_iterations + 1):
        for _ in range(cfg.inner_iterations):
            if period is not None:
                c = _cycle_subseries(y - trend, period, cfg.seasonal_smoother, rw)
                low = _lowpass(c, period, cfg.lowpass_window)
                season = c[period : period + n] - low
            trend = _smooth(y - season, nt, rw)
        if outer < cfg.robust_iterations:
            rw = _robustness_weights(y - trend - season)
    remainder = y - trend - season
    weights = np.ones(n) if rw is None else rw
    return StlResult(trend=trend, seasonal=season, remainder=remainder, weights=weights)


def stl(ts: TimeSeries, cfg: StlConfig) -> StlResult:
    if ts.has_missing:
        raise ValueError("series has missing samples; fill them before decomposition")
    return stl_values(ts.values, cfg)


def autocorrelation(y, lag: int) -> float:
    y = np.asarray(y, dtype=float)
    d = y - y.mean()
    denom = float(np.dot(d, d))
    if denom <= 0 or lag >= y.size:
        return 0.0
    return float(np.dot(d[:-lag], d[lag:]) / denom) if lag > 0 else 1.0


def detect_seasonality(
    ts: TimeSeries | np.ndarray,
    candidate_periods,
    threshold: float = SEASONALITY_THRESHOLD,
    trim: float = 0.1,
) -> int | None:
    """Candidate lag with the highest autocorrelation, if it exceeds ``threshold``.

    The series is first winsorized to its ``[trim, 1 - trim]`` quantile band:
    the check runs before failures are known, and a few deep outages would
    otherwise dominate the variance and hide the cycle.
    """
    y = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=float)
    if trim > 0 and y.size:
        lo, hi = np.quantile(y, [trim, 1.0 - trim])
        y = np.clip(y, lo, hi)
    best, best_r = None, threshold
    for p in sorted(candidate_periods):
        if p < 2 or p >= y.size / 2:
            continue
        r = autocorrelation(y, p)
        if r > best_r:
            best, best_r = p, r
    return best


def default_config(ts: TimeSeries) -> StlConfig:
    """Period picked from {day, week} in samples; trend-only when neither is seasonal."""
    day = max(2, 86400 // ts.interval)
    week = max(2, 7 * 86400 // ts.interval)
    period = detect_seasonality(ts, [day, week])
    if period is None:
        return StlConfig(period=None, trend_smoother=default_trend_window(day))
    return StlConfig(period=period)
