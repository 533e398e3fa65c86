"""Sample quantiles shared by severity fitting and the reliability metrics."""
import math


def percentile(values, q: float) -> float:
    """Linearly interpolated sample percentile (Hyndman-Fan type 7), ``q`` in [0, 100]."""
    xs = sorted(float(v) for v in values)
    if not xs:
        raise ValueError("percentile of an empty sample is undefined")
    if not 0 <= q <= 100:
        raise ValueError(f"q must lie in [0, 100], got {q}")
    h = (len(xs) - 1) * q / 100.0
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def median(values) -> float:
    return percentile(values, 50.0)
