import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cua.reliability import (
    ecdf,
    hour_of_week,
    pearson,
    severity_duration_scatter,
    summarize,
    weekly_histogram,
)
from cua.traceio import CuaTrace, Vantage, trace_from_rows

TUESDAY_0030 = 1_600_734_600  # 2020-09-22 00:30 UTC


def oracle_tail(values):
    xs = sorted(values)
    if len(xs) < 20:
        return float(xs[-1])
    pos = (len(xs) - 1) * 95 / 100  # type-7 position, same rounding as the definition
    i = int(pos)
    return xs[i] + (pos - i) * (xs[min(i + 1, len(xs) - 1)] - xs[i])


def oracle_median(values):
    xs = sorted(values)
    n = len(xs)
    return float(xs[n // 2]) if n % 2 else (xs[n // 2 - 1] + xs[n // 2]) / 2


def test_hand_example():
    s = summarize(trace_from_rows([(0, 60, 1.0), (3660, 3720, 0.5), (7320, 7380, 0.2)]))
    assert (s.n_failures, s.mtbf, s.ttbf, s.mfd, s.tfd) == (3, 3600, 3600, 60, 60)
    assert s.tbf_small_sample and s.duration_small_sample


def test_single_event():
    s = summarize(trace_from_rows([(10, 70, 1.0)]))
    assert s.mfd == s.tfd == 60 and s.mtbf is None and s.ttbf is None


def test_empty_trace():
    s = summarize(CuaTrace("x", Vantage.USER_REPORTS))
    assert s.n_failures == 0 and s.as_dict()["mfd"] is None


def random_trace(seed, n):
    rng = np.random.default_rng(seed)
    gaps = rng.integers(0, 10**5, n)
    durs = rng.integers(1, 10**4, n)
    starts = 1_600_000_000 + np.cumsum(gaps) + np.concatenate([[0], np.cumsum(durs)[:-1]])
    return trace_from_rows([(int(s), int(s + d), 0.5) for s, d in zip(starts, durs)])


def traces(max_events=500):
    return st.builds(random_trace, st.integers(0, 2**32 - 1), st.integers(1, max_events))


@settings(max_examples=100, deadline=None)
@given(traces())
def test_summary_matches_sort_oracle(trace):
    s = summarize(trace)
    ev = trace.events
    durs = [e.end - e.start for e in ev]
    assert s.mfd == oracle_median(durs)
    assert s.tfd == oracle_tail(durs)
    tbf = [b.start - a.end for a, b in zip(ev, ev[1:])]
    if tbf:
        assert s.mtbf == oracle_median(tbf) and s.ttbf == oracle_tail(tbf)
        assert s.ttbf >= s.mtbf
    assert s.tfd >= s.mfd


@settings(max_examples=50, deadline=None)
@given(traces(60), st.integers(-10**8, 10**8))
def test_time_shift_invariance(trace, shift):
    moved = trace_from_rows([(e.start + shift, e.end + shift, e.severity) for e in trace.events])
    assert summarize(moved) == summarize(trace)


@settings(max_examples=50, deadline=None)
@given(traces(60), st.integers(2, 7))
def test_duration_scaling(trace, k):
    scaled = trace_from_rows([(e.start * k, e.start * k + (e.end - e.start) * k, e.severity)
                              for e in trace.events])
    a, b = summarize(trace), summarize(scaled)
    assert b.mfd == pytest.approx(k * a.mfd) and b.tfd == pytest.approx(k * a.tfd)


def test_duration_scaling_keeps_correlation_sign():
    rows = [(0, 100, 0.1), (500, 800, 0.4), (2000, 2900, 0.9)]
    scaled = [(s * 3, s * 3 + (e - s) * 3, v) for s, e, v in rows]
    r1 = severity_duration_scatter(trace_from_rows(rows))[1]
    r2 = severity_duration_scatter(trace_from_rows(scaled))[1]
    assert np.sign(r1) == np.sign(r2) == 1


def test_tuesday_bin():
    hist = weekly_histogram(trace_from_rows([(TUESDAY_0030, TUESDAY_0030 + 60, 1.0)]))
    assert hist[24] == 1.0 and hist.sum() == 1.0
    assert hour_of_week(TUESDAY_0030, shift_hours=-1) == 23


def test_empty_weekly():
    assert not weekly_histogram(CuaTrace("x", Vantage.USER_REPORTS)).any()


def test_uniform_weekly_spread():
    rng = np.random.default_rng(0)
    starts = np.sort(rng.choice(10**8, size=1000, replace=False)) * 10
    trace = trace_from_rows([(int(s), int(s) + 5, 0.5) for s in starts])
    assert weekly_histogram(trace).max() < 0.02


def test_weekly_shift_rotates():
    trace = trace_from_rows([(TUESDAY_0030, TUESDAY_0030 + 60, 1.0)])
    assert np.array_equal(np.roll(weekly_histogram(trace), 5), weekly_histogram(trace, 5))


def test_ecdf():
    assert ecdf([0.5, 0.1, 0.5, 1.0]) == [(0.1, 0.25), (0.5, 0.75), (1.0, 1.0)]


def test_pearson():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson([1, 1, 1], [1, 2, 3]) is None
    with pytest.raises(ValueError):
        pearson([1], [1])


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=40))
def test_pearson_bounded_and_matches_numpy(pairs):
    xs, ys = zip(*pairs)
    r = pearson(xs, ys)
    if r is None:
        return
    assert -1.0 <= r <= 1.0
    if np.std(xs) > 1e-3 and np.std(ys) > 1e-3:
        assert r == pytest.approx(np.corrcoef(xs, ys)[0, 1], abs=1e-9)
