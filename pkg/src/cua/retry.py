"""Retry amplification in microservice call structures under trace-driven failures.

Every stage makes one initial attempt and at most ``max_retries`` retries.
An attempt at a chain stage succeeds when the stage itself does not fail and
the downstream stage's call succeeds within its own budget; a stage that
exhausts its budget costs its caller one attempt. A fanout attempt succeeds
when all of its children's calls succeed. Retries are counted at the client.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .timeseries import TimeSeries

DAY = 86400
INTERVAL = 1200


class Structure(enum.Enum):
    MONOLITH = "monolith"
    FANOUT = "fanout"
    CHAIN = "chain"


@dataclass(frozen=True)
class ServiceGraph:
    kind: Structure = Structure.MONOLITH
    size: int = 1  # fanout width or chain depth
    max_retries: int = 3

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"{self.kind.value} size must be >= 1, got {self.size}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind is Structure.MONOLITH and self.size != 1:
            raise ValueError("a monolith has exactly one service")

    @classmethod
    def monolith(cls, max_retries: int = 3) -> "ServiceGraph":
        return cls(Structure.MONOLITH, 1, max_retries)

    @classmethod
    def fanout(cls, width: int, max_retries: int = 3) -> "ServiceGraph":
        return cls(Structure.FANOUT, width, max_retries)

    @classmethod
    def chain(cls, depth: int, max_retries: int = 3) -> "ServiceGraph":
        return cls(Structure.CHAIN, depth, max_retries)

    @property
    def n_services(self) -> int:
        return self.size


@dataclass(frozen=True)
class DiurnalModel:
    """Users over time: ``offset + amplitude * sin(2 pi (t - phase) / period)``.

    The default phase puts the peak at 20:00 UTC.
    """

    offset: float = 1.0
    amplitude: float = 0.5
    phase: float = 20 * 3600 - DAY / 4
    period: float = DAY

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.offset - self.amplitude <= 0:
            raise ValueError(
                f"user model must stay positive: offset {self.offset} <= amplitude {self.amplitude}"
            )

    def users(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.offset + self.amplitude * np.sin(2 * np.pi * (t - self.phase) / self.period)

    def weight(self, t) -> np.ndarray:
        """Users relative to the daily mean (mean weight 1)."""
        return self.users(t) / self.offset


@dataclass(frozen=True, eq=False)
class FailureProbabilityTrace:
    probs: np.ndarray
    interval: int = INTERVAL
    start_epoch: int = 0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probability trace must be a non-empty 1-d sequence")
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_epoch + self.interval * np.arange(self.probs.size, dtype=np.int64)

    @classmethod
    def constant(cls, p: float, like: "FailureProbabilityTrace") -> "FailureProbabilityTrace":
        return cls(np.full(len(like), p), like.interval, like.start_epoch)


@dataclass(frozen=True, eq=False)
class RetryOutcome:
    histogram: np.ndarray  # requests that succeeded after k retries, k = 0..max_retries
    failed: int

    @property
    def requests(self) -> int:
        return int(self.histogram.sum()) + self.failed

    @property
    def total_retries(self) -> int:
        """Retries spent by requests that eventually succeeded."""
        return int(np.dot(np.arange(self.histogram.size), self.histogram))

    def __add__(self, other: "RetryOutcome") -> "RetryOutcome":
        return RetryOutcome(self.histogram + other.histogram, self.failed + other.failed)

    def __eq__(self, other):
        return (
            isinstance(other, RetryOutcome)
            and np.array_equal(self.histogram, other.histogram)
            and self.failed == other.failed
        )

    def fractions(self) -> np.ndarray:
        n = self.requests
        return np.append(self.histogram, self.failed) / n if n else np.zeros(self.histogram.size + 1)


def trace_to_probabilities(reports: TimeSeries, diurnal=None) -> FailureProbabilityTrace:
    """Reports per user, normalized by the series maximum.

    ``diurnal`` is a :class:`DiurnalModel` or an explicit per-sample user
    count array.
    """
    if diurnal is None:
        diurnal = DiurnalModel()
    values = reports.values
    users = (
        diurnal.users(reports.timestamps)
        if isinstance(diurnal, DiurnalModel)
        else np.asarray(diurnal, dtype=float)
    )
    if users.shape != values.shape:
        raise ValueError("user counts must match the report series length")
    if np.any(users <= 0):
        raise ValueError("user model must be positive everywhere")
    scaled = values / users
    peak = scaled.max() if scaled.size else 0.0
    probs = scaled / peak if peak > 0 else np.zeros_like(scaled)
    return FailureProbabilityTrace(probs, reports.interval, reports.start_epoch)


def _stage_probs(graph: ServiceGraph, p) -> np.ndarray:
    probs = np.broadcast_to(np.asarray(p, dtype=float), (graph.size,))
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("failure probabilities must lie in [0, 1]")
    return probs


def _call(n, attempt, budget):
    """``n`` calls, each retrying ``attempt`` up to ``budget`` times.

    Returns (succeeded, attempts used) per call.
    """
    ok = np.zeros(n, dtype=bool)
    used = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    for _ in range(budget + 1):
        if active.size == 0:
            break
        used[active] += 1
        success = attempt(active.size)
        ok[active[success]] = True
        active = active[~success]
    return ok, used


def _chain_attempt(stage, probs, budget, rng):
    def attempt(m):
        own = rng.random(m) >= probs[stage]
        if stage + 1 < probs.size:
            idx = np.flatnonzero(own)
            if idx.size:
                sub_ok, _ = _call(idx.size, _chain_attempt(stage + 1, probs, budget, rng), budget)
                own[idx] = sub_ok
        return own

    return attempt


def _fanout_attempt(probs, budget, rng):
    def child(p):
        return lambda m: rng.random(m) >= p

    def attempt(m):
        ok = np.ones(m, dtype=bool)
        for p in probs:
            child_ok, _ = _call(m, child(p), budget)
            ok &= child_ok
        return ok

    return attempt


def simulate_requests(graph: ServiceGraph, p, n: int, rng) -> RetryOutcome:
    """Simulate ``n`` independent client requests at per-stage failure probability ``p``."""
    probs = _stage_probs(graph, p)
    budget = graph.max_retries
    if graph.kind is Structure.FANOUT:
        attempt = _fanout_attempt(probs, budget, rng)
    else:
        attempt = _chain_attempt(0, probs, budget, rng)
    ok, used = _call(int(n), attempt, budget)
    hist = np.bincount(used[ok] - 1, minlength=budget + 1).astype(np.int64)
    return RetryOutcome(hist, int((~ok).sum()))


def simulate_request(graph: ServiceGraph, p, rng) -> int | None:
    """Retries used by one request, or ``None`` if it failed."""
    out = simulate_requests(graph, p, 1, rng)
    return None if out.failed else int(np.argmax(out.histogram))


def interval_rng(seed: int, index: int) -> np.random.Generator:
    """Independent, named stream for one trace interval."""
    return np.random.default_rng([seed, index])


def simulate_trace(
    graph: ServiceGraph,
    trace: FailureProbabilityTrace,
    requests_per_interval: int = 10_000,
    arrival: DiurnalModel | None = None,
    seed: int = 0,
) -> RetryOutcome:
    """Issue ``round(requests_per_interval * arrival weight)`` requests per interval."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    arrival = arrival or DiurnalModel()
    counts = np.rint(requests_per_interval * arrival.weight(trace.timestamps)).astype(np.int64)
    total = RetryOutcome(np.zeros(graph.max_retries + 1, dtype=np.int64), 0)
    for i, (p, n) in enumerate(zip(trace.probs, counts)):
        if n == 0:
            continue
        if p == 0:
            # no stage can fail: every request succeeds first time
            total.histogram[0] += n
            continue
        total = total + simulate_requests(graph, p, n, interval_rng(seed, i))
    return total


def _ratio(a: float, b: float) -> float:
    if a == 0:
        return 0.0
    return a / b if b else math.inf


@dataclass(frozen=True)
class BaselineComparison:
    trace: RetryOutcome
    baseline: RetryOutcome
    constant_p: float

    @property
    def retry_ratio(self) -> float:
        """Trace total retries over constant-probability total retries."""
        return _ratio(self.trace.total_retries, self.baseline.total_retries)

    @property
    def failure_ratio(self) -> float:
        return _ratio(self.trace.failed, self.baseline.failed)

    def as_dict(self) -> dict:
        return {
            "constant_p": self.constant_p,
            "trace_requests": self.trace.requests,
            "trace_total_retries": self.trace.total_retries,
            "trace_failed": self.trace.failed,
            "baseline_requests": self.baseline.requests,
            "baseline_total_retries": self.baseline.total_retries,
            "baseline_failed": self.baseline.failed,
            "retry_ratio": self.retry_ratio,
            "failure_ratio": self.failure_ratio,
        }


def compare_baseline(
    graph: ServiceGraph,
    trace: FailureProbabilityTrace,
    constant_p: float = 0.01,
    requests_per_interval: int = 10_000,
    arrival: DiurnalModel | None = None,
    seed: int = 0,
) -> BaselineComparison:
    """Run the trace and a constant-probability trace of equal length with the same seed."""
    baseline = FailureProbabilityTrace.constant(constant_p, trace)
    kw = dict(requests_per_interval=requests_per_interval, arrival=arrival, seed=seed)
    return BaselineComparison(
        simulate_trace(graph, trace, **kw), simulate_trace(graph, baseline, **kw), constant_p
    )


def trace_from_events(events, start_epoch: int, n_intervals: int, interval: int = INTERVAL):
    """Rasterize CUA failures: each interval takes the highest overlapping severity."""
    probs = np.zeros(n_intervals)
    for e in events:
        lo = max(0, (e.start - start_epoch) // interval)
        hi = min(n_intervals, -(-(e.end - start_epoch) // interval))
        if hi > lo:
            probs[lo:hi] = np.maximum(probs[lo:hi], e.severity)
    return FailureProbabilityTrace(probs, interval, start_epoch)
