"""Synthetic signal generators shared by the test-suite."""
import numpy as np

from cua.timeseries import TimeSeries, Unit

DAY = 86400


def player_series(seed, days=14, interval=1200, n_outages=3, base=10_000.0):
    """Diurnal player counts with rectangular outages; returns (ts, [(start, length)])."""
    rng = np.random.default_rng(seed)
    per_day = DAY // interval
    n = days * per_day
    t = np.arange(n)
    values = base * (1.0 + 0.3 * np.sin(2 * np.pi * t / per_day + rng.uniform(0, 2 * np.pi)))
    values *= 1.0 + 0.01 * rng.standard_normal(n)
    values += base * 0.0002 * t  # slow growth
    outages = []
    # one outage per 3-day slot so no rolling window spans two outages
    slots = np.arange(per_day + 5, n - per_day - 40, 3 * per_day)
    for s in rng.choice(slots, size=min(n_outages, slots.size), replace=False):
        start = int(s + rng.integers(0, per_day))
        length = int(rng.integers(3, 31))
        values[start : start + length] *= rng.uniform(0.01, 0.09)
        outages.append((start, length))
    outages.sort()
    return TimeSeries(1_600_000_000, interval, np.maximum(values, 0), Unit.ONLINE_PLAYERS), outages
