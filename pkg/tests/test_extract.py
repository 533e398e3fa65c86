from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cua.extract import (
    Direction,
    FailureRange,
    PeakParams,
    default_params,
    expand_to_failure,
    extract_failures,
    mark_anomalous_points,
    merge_ranges,
    simple_failure_ranges,
)
from cua.stl import default_config
from cua.timeseries import TimeSeries, Unit

from synth import player_series


def ts_of(values, unit=Unit.USER_REPORTS, interval=1200):
    return TimeSeries(0, interval, np.asarray(values, dtype=float), unit)


def spans(ranges):
    return [(r.start_index, r.end_index, r.summit) for r in ranges]


def test_simple_ranges():
    out = simple_failure_ranges(ts_of([0, 3, 5, 2, 0, 0, 1, 0]))
    assert spans(out) == [(1, 3, 5.0), (6, 6, 1.0)]


def test_simple_ranges_edges():
    assert simple_failure_ranges(ts_of(np.zeros(10))) == []
    assert spans(simple_failure_ranges(ts_of([2, 1, 4]))) == [(0, 2, 4.0)]


DROP = PeakParams(window_w=48, nsigma_n=3, diff_threshold_d=20, direction=Direction.DROP_DOWN)


def single_drop():
    raw = np.full(1000, 100.0)
    raw[500] = 10
    return raw


def test_mark_single_drop():
    raw = single_drop()
    assert mark_anomalous_points(raw, raw, DROP) == [500]


def test_mark_unreachable_sigma_flat_window():
    raw = single_drop()
    p = PeakParams(window_w=48, nsigma_n=1000, diff_threshold_d=20, direction=Direction.DROP_DOWN)
    # the window before 500 is flat, which leaves only the difference test
    assert mark_anomalous_points(raw, raw, p) == [500]
    noisy = raw + np.random.default_rng(0).normal(0, 1, raw.size)
    assert mark_anomalous_points(noisy, noisy, p) == []


def test_mark_unreachable_sigma_including_current_point():
    raw = single_drop()
    p = PeakParams(window_w=48, nsigma_n=1000, diff_threshold_d=20, direction=Direction.DROP_DOWN,
                   include_current=True)
    # a single point is at most (W - 1) / sqrt(W) deviations from its own window
    assert mark_anomalous_points(raw, raw, p) == []
    assert mark_anomalous_points(raw, raw, replace(p, nsigma_n=3)) == [500]


def test_mark_constant_series():
    raw = np.full(300, 42.0)
    for direction in Direction:
        p = PeakParams(window_w=24, diff_threshold_d=0, direction=direction)
        assert mark_anomalous_points(raw, raw, p) == []


def test_mark_or_combination_is_looser():
    rng = np.random.default_rng(2)
    raw = 100 + rng.normal(0, 2, 400)
    raw[200] = 80
    args = dict(window_w=48, nsigma_n=3, diff_threshold_d=30, direction=Direction.DROP_DOWN)
    assert mark_anomalous_points(raw, raw, PeakParams(**args)) == []
    assert 200 in mark_anomalous_points(raw, raw, PeakParams(**args, combine="or"))


def test_expand_drop_walkthrough():
    raw = [100, 100, 100, 10, 12, 15, 96, 100]
    p = PeakParams(window_w=2, drop_threshold_s=50, regain_fraction_r=0.9, direction=Direction.DROP_DOWN)
    assert expand_to_failure(3, raw, p) == FailureRange(3, 6, 10.0)


def test_expand_anchor_at_last_index():
    raw = [100, 100, 100, 10]
    p = PeakParams(window_w=2, drop_threshold_s=50, direction=Direction.DROP_DOWN)
    assert expand_to_failure(3, raw, p) == FailureRange(3, 3, 10.0)


def test_expand_without_recovery():
    raw = [100, 100, 10, 10, 10, 10]
    p = PeakParams(window_w=2, drop_threshold_s=50, direction=Direction.DROP_DOWN)
    assert expand_to_failure(2, raw, p) == FailureRange(2, 5, 10.0)


def test_expand_spike_ends_before_fall():
    raw = [0, 0, 50, 80, 40, 5, 0]
    p = PeakParams(window_w=2, drop_threshold_s=30, regain_fraction_r=0.9)
    # 5 <= 0.1 * 80 at index 5, so the failure covers 2..4
    assert expand_to_failure(2, raw, p) == FailureRange(2, 4, 80.0)


def test_expand_walks_back_over_ramp():
    raw = [100, 100, 90, 80, 20, 20, 100]
    p = PeakParams(window_w=2, drop_threshold_s=50, direction=Direction.DROP_DOWN)
    assert expand_to_failure(5, raw, p).start_index == 4


def test_two_anchors_merge():
    raw = np.full(1000, 100.0)
    raw[500:502] = 60
    raw[502:506] = 20
    p = PeakParams(window_w=48, nsigma_n=3, diff_threshold_d=20, drop_threshold_s=30,
                   direction=Direction.DROP_DOWN)
    assert mark_anomalous_points(raw, raw, p) == [500, 502]
    out = extract_failures(TimeSeries(0, 1200, raw, Unit.ONLINE_PLAYERS), p)
    assert spans(out) == [(500, 506, 20.0)]


def test_merge_adjacent_and_overlapping():
    raw = np.arange(20.0)
    ranges = [FailureRange(5, 7, 0), FailureRange(1, 3, 0), FailureRange(4, 4, 0), FailureRange(10, 12, 0)]
    assert spans(merge_ranges(ranges, raw, Direction.SPIKE_UP)) == [(1, 7, 7.0), (10, 12, 12.0)]


def test_zero_reports():
    assert extract_failures(ts_of(np.zeros(500))) == []


def test_default_params():
    ts = ts_of(np.r_[np.zeros(100), 50.0])
    p = default_params(ts)
    assert (p.window_w, p.nsigma_n, p.diff_threshold_d, p.drop_threshold_s, p.regain_fraction_r) == (
        72, 3.0, 5.0, 10.0, 0.9)
    assert p.direction is Direction.SPIKE_UP
    assert default_params(ts_of([1.0], Unit.ONLINE_PLAYERS)).direction is Direction.DROP_DOWN
    assert default_params(ts, window_w=10).window_w == 10


def test_two_outages_three_days_apart():
    ts, truth = player_series(seed=4, days=10, n_outages=2)
    got = extract_failures(ts, default_params(ts), default_config(ts))
    assert len(got) == 2
    for r, (start, _) in zip(got, truth):
        assert abs(r.start_index - start) <= 2


random_series = st.lists(st.floats(0, 1000), min_size=30, max_size=200)


def run(values, direction, **kw):
    ts = ts_of(values)
    p = default_params(ts, direction, window_w=10, **kw)
    return p, extract_failures(ts, p)


@settings(max_examples=150, deadline=None)
@given(random_series, st.sampled_from(list(Direction)), st.sampled_from(["and", "or"]))
def test_ranges_disjoint_sorted_and_cover_anchors(values, direction, combine):
    p, out = run(values, direction, combine=combine)
    for a, b in zip(out, out[1:]):
        assert a.end_index + 1 < b.start_index
    if not any(values):
        return
    raw = np.asarray(values)
    for i in mark_anomalous_points(raw, raw, p):
        assert sum(r.start_index <= i <= r.end_index for r in out) == 1


@settings(max_examples=100, deadline=None)
@given(random_series, st.floats(0.5, 5), st.floats(0.5, 5))
def test_larger_n_marks_no_more_points(values, n1, n2):
    raw = np.asarray(values)
    lo, hi = sorted([n1, n2])
    for direction in Direction:
        p = PeakParams(window_w=10, nsigma_n=lo, diff_threshold_d=50, direction=direction)
        q = PeakParams(window_w=10, nsigma_n=hi, diff_threshold_d=50, direction=direction)
        assert len(mark_anomalous_points(raw, raw, q)) <= len(mark_anomalous_points(raw, raw, p))


@settings(max_examples=100, deadline=None)
@given(random_series, st.floats(0.05, 1), st.floats(0.05, 1), st.data())
def test_larger_r_never_shortens_drop(values, r1, r2, data):
    raw = np.asarray(values)
    anchor = data.draw(st.integers(0, raw.size - 1))
    lo, hi = sorted([r1, r2])
    base = dict(window_w=10, drop_threshold_s=100, direction=Direction.DROP_DOWN)
    a = expand_to_failure(anchor, raw, PeakParams(regain_fraction_r=lo, **base))
    b = expand_to_failure(anchor, raw, PeakParams(regain_fraction_r=hi, **base))
    assert b.end_index >= a.end_index


@st.composite
def isolated_spikes(draw):
    w = 12
    pieces = [np.zeros(w + draw(st.integers(1, 5)))]
    for _ in range(draw(st.integers(1, 5))):
        pieces.append(np.full(draw(st.integers(1, 6)), draw(st.floats(50, 100))))
        pieces.append(np.zeros(w + draw(st.integers(1, 8))))
    return np.concatenate(pieces), w


@settings(max_examples=100, deadline=None)
@given(isolated_spikes())
def test_simple_and_peak_agree_on_isolated_spikes(case):
    values, w = case
    ts = ts_of(values)
    peaks = extract_failures(ts, default_params(ts, window_w=w))
    assert spans(peaks) == spans(simple_failure_ranges(ts))


def test_window_longer_than_series():
    with pytest.raises(ValueError):
        mark_anomalous_points(np.ones(5), np.ones(5), PeakParams(window_w=10))
    assert extract_failures(ts_of([0, 5, 0]), PeakParams(window_w=10)) == []
