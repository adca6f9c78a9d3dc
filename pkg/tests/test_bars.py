import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from retvol.bars import (
    AggregationScheme,
    BarSeries,
    aggregate,
    aggregate_raw,
    normalize_volume,
    pool,
    standardize,
    trade_blocks,
)
from retvol.errors import DegenerateVolumeError, InsufficientDataError, ParameterError, ZeroVarianceError
from retvol.marketdata import Session, TradeSeries, parse_trades

THREE_TRADES = "0,100,10\n30000,110,30\n90000,121,20\n"


def random_series(seed, n=400, max_gap=20_000):
    rng = np.random.default_rng(seed)
    ts = np.cumsum(rng.integers(0, max_gap, n))
    px = 50 * np.exp(np.cumsum(0.01 * rng.standard_normal(n)))
    vol = rng.integers(1, 500, n)
    return TradeSeries.from_arrays("R", ts, px, vol)


def test_standardize_two_points():
    np.testing.assert_allclose(standardize([1, 3]), [-math.sqrt(0.5), math.sqrt(0.5)], rtol=1e-15)


def test_standardize_constant():
    with pytest.raises(ZeroVarianceError):
        standardize([5, 5, 5])


def test_standardize_too_short():
    with pytest.raises(InsufficientDataError):
        standardize([1.0])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, st.integers(3, 40), elements=finite), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_standardize_affine_invariance(x, a, b):
    assume(np.std(x) > 1e-3)
    np.testing.assert_allclose(standardize(a * x + b), standardize(x), atol=1e-7)


@given(arrays(np.float64, st.integers(2, 200), elements=st.floats(-1, 1, allow_nan=False)))
def test_standardize_moments(x):
    assume(np.std(x) > 1e-6)
    z = standardize(x)
    assert abs(z.mean()) < 1e-9
    assert abs(z.std(ddof=1) - 1) < 1e-9


def test_normalize_volume_examples():
    np.testing.assert_allclose(normalize_volume([40, 20]), [4 / 3, 2 / 3], rtol=1e-15)
    assert normalize_volume([7]).tolist() == [1.0]


def test_normalize_volume_all_zero():
    with pytest.raises(DegenerateVolumeError):
        normalize_volume([0, 0, 0])


@given(arrays(np.float64, st.integers(1, 100), elements=st.floats(1e-3, 1e6)))
def test_normalize_volume_mean_one(x):
    assert abs(normalize_volume(x).mean() - 1) < 1e-12


def test_scheme_validation():
    with pytest.raises(ParameterError):
        AggregationScheme("clock", delta_t=0.0)
    with pytest.raises(ParameterError):
        AggregationScheme("trades", n_trades=0)
    with pytest.raises(ParameterError):
        AggregationScheme("clock", delta_t=1.0, n_trades=3)
    assert AggregationScheme.clock(1).label == "dt1min"
    assert AggregationScheme.trades(15).label == "nT15"


def test_clock_aggregation_hand_walk():
    R, V = aggregate_raw(parse_trades(THREE_TRADES, "X"), AggregationScheme.clock(1))
    np.testing.assert_allclose(R, [math.log(1.1), math.log(1.1)], rtol=1e-14)
    assert V.tolist() == [40.0, 20.0]
    np.testing.assert_allclose(normalize_volume(V), [4 / 3, 2 / 3], rtol=1e-15)


def test_tick_aggregation_hand_walk():
    R, V = aggregate_raw(parse_trades(THREE_TRADES, "X"), AggregationScheme.trades(1))
    np.testing.assert_allclose(R, [math.log(1.1), math.log(1.1)], rtol=1e-14)
    assert V.tolist() == [30.0, 20.0]


def test_hand_walk_bars_cannot_be_standardized():
    # both intervals move the price by the same 10%
    for scheme in (AggregationScheme.clock(1), AggregationScheme.trades(1)):
        with pytest.raises(ZeroVarianceError):
            aggregate(parse_trades(THREE_TRADES, "X"), scheme)


def test_clock_aggregation_standardized():
    b = aggregate(parse_trades(THREE_TRADES + "150000,127.05,5\n", "X"), AggregationScheme.clock(1))
    np.testing.assert_allclose(b.raw_returns, np.log([1.1, 1.1, 1.05]), rtol=1e-12)
    assert b.raw_volumes.tolist() == [40.0, 20.0, 5.0]
    np.testing.assert_allclose(b.returns, [1, 1, -2] / np.sqrt(3), rtol=1e-8)


def test_equal_raw_returns_are_zero_variance():
    s = parse_trades("0,100,1\n60000,100,1\n120000,100,1", "X")
    with pytest.raises(ZeroVarianceError):
        aggregate(s, AggregationScheme.clock(1))


def test_too_few_intervals():
    s = parse_trades("0,100,1\n1000,101,1", "X")
    with pytest.raises(InsufficientDataError):
        aggregate(s, AggregationScheme.clock(1))
    with pytest.raises(ParameterError):
        aggregate(s, AggregationScheme.trades(3))


def test_empty_clock_windows_are_dropped():
    s = parse_trades("0,100,1\n10000,101,1\n600000,102,2\n660000,99,3", "X")
    b = aggregate(s, AggregationScheme.clock(1))
    assert b.raw_volumes.tolist() == [2.0, 2.0, 3.0]
    np.testing.assert_allclose(b.raw_returns, np.log([101 / 100, 102 / 101, 99 / 102]), rtol=1e-13)


@pytest.mark.parametrize("n_trades", [1, 2, 3, 7, 25])
@pytest.mark.parametrize("seed", range(3))
def test_block_volume_conservation(n_trades, seed):
    s = random_series(seed, n=n_trades * 13)
    _, vol, _ = trade_blocks(s, n_trades)
    assert vol.sum() == s.volumes.sum()


@pytest.mark.parametrize("k", [2, 3, 5, 10])
def test_log_return_additivity(k):
    s = random_series(1, n=503)
    tick = aggregate(s, AggregationScheme.trades(1)).raw_returns
    block = aggregate(s, AggregationScheme.trades(k)).raw_returns
    m = block.size
    # tick return j covers trades j -> j+1; block b (b >= 1) covers trades b*k-1 -> (b+1)*k-1
    sums = np.array([tick[b * k - 1:(b + 1) * k - 1].sum() for b in range(1, m + 1)])
    np.testing.assert_allclose(block, sums, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_clock_two_window_additivity(seed):
    s = random_series(seed, n=600, max_gap=40_000)
    dt = 1.0
    d_ms = 60_000
    origin1 = (s.timestamps[0] // d_ms) * d_ms
    origin2 = (s.timestamps[0] // (2 * d_ms)) * (2 * d_ms)
    win1 = (s.timestamps - origin1) // d_ms
    fine = aggregate(s, AggregationScheme.clock(dt)).raw_returns
    coarse = aggregate(s, AggregationScheme.clock(2 * dt)).raw_returns
    fine_ids = np.unique(win1)
    coarse_ids = np.unique((s.timestamps - origin2) // (2 * d_ms))
    fine_by_abs = dict(zip((origin1 + fine_ids * d_ms).tolist(), fine.tolist()))
    checked = 0
    for cid, R in zip(coarse_ids.tolist(), coarse.tolist()):
        start = origin2 + cid * 2 * d_ms
        if start in fine_by_abs and start + d_ms in fine_by_abs and start != origin1:
            assert R == pytest.approx(fine_by_abs[start] + fine_by_abs[start + d_ms], abs=1e-12)
            checked += 1
    assert checked > 20


def test_sessions_exclude_overnight_returns():
    sessions = (Session("d1", 0, 300_000), Session("d2", 1_000_000, 1_300_000))
    text = "0,100,1\n70000,101,1\n130000,102,1\n1000000,150,1\n1070000,151,1\n1130000,149,1\n"
    s = parse_trades(text, "X", sessions=sessions)
    b = aggregate(s, AggregationScheme.clock(1))
    # each session: first window returns 0 (open is its own reference), then two in-session moves
    expected = np.log([1.0, 101 / 100, 102 / 101, 1.0, 151 / 150, 149 / 151])
    np.testing.assert_allclose(b.raw_returns, expected, atol=1e-14)
    t = aggregate(s, AggregationScheme.trades(1))
    np.testing.assert_allclose(t.raw_returns, np.log([101 / 100, 102 / 101, 151 / 150, 149 / 151]), atol=1e-14)


def test_barseries_serialization():
    b = aggregate(parse_trades(THREE_TRADES + "150000,120,5\n", "X"), AggregationScheme.clock(1))
    lines = b.to_csv().splitlines()
    assert lines[0] == "k,raw_return,return,volume"
    assert len(lines) == b.k_count + 1
    k, R, r, v = lines[1].split(",")
    assert (int(k), float(R), float(r), float(v)) == (0, b.raw_returns[0], b.returns[0], b.volumes[0])
    d = json.loads(b.to_json())
    assert d["scheme"] == {"kind": "clock", "delta_t_min": 1.0}
    assert d["returns"] == b.returns.tolist()


def test_pool_keeps_standardization():
    bars = [aggregate(random_series(s), AggregationScheme.trades(2)) for s in range(3)]
    p = pool(bars)
    assert p.k_count == sum(b.k_count for b in bars)
    assert abs(p.returns.mean()) < 1e-9 and abs(p.returns.std(ddof=1) - 1) < 1e-9
    assert abs(p.volumes.mean() - 1) < 1e-12


def test_from_raw_rejects_mismatch():
    with pytest.raises(ParameterError):
        BarSeries.from_raw("X", AggregationScheme.trades(1), [1.0, 2.0], [1.0])
