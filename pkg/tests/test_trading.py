import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridcast.harness.oracles import grid_bid_oracle
from hybridcast.trading.backtest import backtest
from hybridcast.trading.error_shaping import (ErrorShapingModel, TrainingDiverged, evaluate_spread_model,
                                              train_spread_model)
from hybridcast.trading.strategy import (BID_SLOPE, MarketSeries, baseline_bid, decision_revenue,
                                         estimate_spread, optimal_bid, period_of_day, settle, trading_loss,
                                         trading_loss_direct)


def _market(days=10, spread=None, seed=0, actual=None):
    rng = np.random.default_rng(seed)
    n = 48 * days
    ts = pd.date_range("2024-01-01", periods=n, freq="30min", tz="UTC")
    da = 60 + rng.normal(0, 5, n)
    s = np.zeros(n) if spread is None else np.asarray(spread, dtype=float)
    y = rng.uniform(100, 900, n) if actual is None else actual
    return MarketSeries(ts, da, da - s, y)


def test_period_of_day():
    assert period_of_day(pd.to_datetime(["2024-01-01T00:00Z", "2024-01-01T23:30Z"])).tolist() == [1, 48]


def test_estimate_spread_examples():
    assert np.allclose(estimate_spread(_market(3, np.full(144, 4.0))).means, 4.0)
    half = np.tile(np.r_[np.full(24, 10.0), np.full(24, -10.0)], 5)
    np.testing.assert_allclose(estimate_spread(_market(5, half)).means, np.r_[np.full(24, 10.0), np.full(24, -10.0)])
    m = _market(2, np.arange(96.0))
    keep = np.flatnonzero(m.period != 7)
    est = estimate_spread(m.slice(keep), w=96)
    assert est.means[6] == pytest.approx(np.mean(np.arange(96.0)[keep]))
    with pytest.raises(ValueError):
        estimate_spread(m.slice(slice(0, 0)))


@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_estimate_spread_full_days_exact(k, seed):
    spread = np.random.default_rng(seed).normal(0, 20, 48 * 8)
    est = estimate_spread(_market(8, spread), w=48 * k)
    np.testing.assert_allclose(est.means, spread[-48 * k:].reshape(k, 48).mean(axis=0), rtol=1e-12, atol=1e-12)


def test_optimal_bid_examples():
    assert optimal_bid(300.0, 0.0) == 300.0
    assert optimal_bid(500.0, 10.0) == pytest.approx(571.43, abs=0.01)
    assert optimal_bid(500.0, 10.0) == pytest.approx(grid_bid_oracle(500.0, 10.0), abs=0.01)
    assert optimal_bid(1790.0, 10.0) == 1800.0
    assert optimal_bid(5.0, -10.0) == 0.0


@settings(max_examples=200)
@given(st.floats(-100, 1900), st.floats(-200, 200))
def test_bid_bounds_and_optimality(yhat, spread):
    bid = optimal_bid(yhat, spread)
    assert 0.0 <= bid <= 1800.0
    grid = np.array([0.0, 1800.0, np.clip(bid + 1, 0, 1800), np.clip(bid - 1, 0, 1800)])
    assert np.all(decision_revenue(bid, yhat, spread) >= decision_revenue(grid, yhat, spread) - 1e-9)


def test_settle_examples():
    m = MarketSeries(pd.to_datetime(["2024-01-01T00:00Z"]), [50.0], [40.0], [100.0])
    assert settle([90.0], m) == pytest.approx(4893.0)
    assert settle([100.0], m) == pytest.approx(5000.0)
    zero = MarketSeries(pd.to_datetime(["2024-01-01T00:00Z"]), [50.0], [40.0], [0.0])
    assert settle([0.0], zero) == 0.0
    with pytest.raises(ValueError):
        settle([1.0, 2.0], m)


def test_trading_loss_examples():
    assert trading_loss(500, 500, 3, 3) == 0.0
    assert trading_loss(510, 500, 3, 3) == pytest.approx(7.0)
    assert trading_loss(510, 500, 2, 3) == pytest.approx(0.07 * 100 + BID_SLOPE / 2 - 10)
    assert trading_loss(510, 500, 2, 3) == pytest.approx(trading_loss_direct(510, 500, 2, 3), rel=1e-9)
    with pytest.raises(ValueError, match="interior"):
        trading_loss(1795, 500, 10, 3)


@given(st.floats(600, 1100), st.floats(-150, 150), st.floats(-40, 40), st.floats(-10, 10))
def test_trading_loss_identity(y, err, spread, spread_err):
    loss = trading_loss(y + err, y, spread + spread_err, spread)
    assert loss == pytest.approx(trading_loss_direct(y + err, y, spread + spread_err, spread), rel=1e-9, abs=1e-9)


def test_baseline_strategies():
    hist = _market(3, np.tile(np.arange(48.0), 3))
    assert np.all(baseline_bid("q50", np.full(48, 300.0)) == 300.0)
    np.testing.assert_allclose(baseline_bid("seasonal_persistence", np.full(48, 300.0), hist),
                               optimal_bid(300.0, np.arange(48.0)))
    np.testing.assert_allclose(baseline_bid("naive", np.full(48, 300.0), hist), optimal_bid(300.0, 23.5))
    assert baseline_bid("ar", np.full(48, 300.0), hist).shape == (48,)
    with pytest.raises(ValueError):
        baseline_bid("naive", np.full(48, 300.0))
    with pytest.raises(ValueError):
        baseline_bid("ar", np.full(48, 300.0), hist.slice(slice(0, 60)))


def test_seasonal_spread_beats_bid_as_forecast():
    rng = np.random.default_rng(1)
    days = 40
    profile = 15 * np.sin(np.linspace(0, 2 * np.pi, 48, endpoint=False))
    spread = np.tile(profile, days) + rng.normal(0, 5, 48 * days)
    m = _market(days, spread, seed=2)
    fc = pd.DataFrame({"timestamp": pd.DatetimeIndex(m.timestamps).tz_localize("UTC"), "q50": m.actual})
    rep = backtest(["st-q50", "q50"], m, fc, window_days=14)
    assert rep.totals["st-q50"] >= rep.totals["q50"]


def test_backtest_perfect_dominates_and_is_deterministic():
    rng = np.random.default_rng(3)
    m = _market(12, rng.normal(0, 20, 48 * 12), seed=4)
    fc = pd.DataFrame({"timestamp": pd.DatetimeIndex(m.timestamps).tz_localize("UTC"),
                       "q50": m.actual + rng.normal(0, 50, len(m)), "mse": m.actual + rng.normal(0, 40, len(m))})
    strategies = ["st-mse", "st-q50", "q50", "mse", "naive", "persistence", "ar"]
    a = backtest(strategies, m, fc, window_days=4)
    b = backtest(strategies, m, fc, window_days=4)
    pd.testing.assert_frame_equal(a.daily, b.daily)
    for s in strategies:
        assert np.all(a.daily["perfect"] >= a.daily[s] - 1e-9)
    assert len(a.scatter) == len(a.daily) * 48 * len(strategies)


def test_backtest_skips_incomplete_days():
    m = _market(8, seed=5)
    keep = np.flatnonzero(~((m.day == np.datetime64("2024-01-07")) & (m.period == 10)))
    m = m.slice(keep)
    fc = pd.DataFrame({"timestamp": pd.DatetimeIndex(m.timestamps).tz_localize("UTC"), "q50": m.actual})
    rep = backtest(["q50"], m, fc, window_days=3)
    assert rep.skipped_days == ["2024-01-07"]
    with pytest.raises(ValueError):
        backtest(["bogus"], m, fc)


def test_zero_model_reduces_to_bid_as_forecast():
    m = _market(2, np.random.default_rng(6).normal(0, 10, 96))
    power = m.actual + 20
    zero = ErrorShapingModel.zero(power_scale=100.0)
    res = evaluate_spread_model(zero, power, m.period, m.actual, m.spread)
    np.testing.assert_allclose(res["bids"], np.clip(power, 0, 1800))


def test_spread_model_training_and_divergence():
    rng = np.random.default_rng(7)
    n = 48 * 20
    periods = np.tile(np.arange(1, 49), 20)
    spread = 10 * np.sin(periods / 48 * 2 * np.pi) + rng.normal(0, 3, n)
    power = rng.uniform(100, 900, n)
    actual = power + rng.normal(0, 30, n)
    model = train_spread_model(power, periods, actual, spread, "accuracy", epochs=30, seed=1)
    assert model.history[-1] < model.history[0]
    again = train_spread_model(power, periods, actual, spread, "accuracy", epochs=30, seed=1)
    np.testing.assert_array_equal(model.predict(power, periods), again.predict(power, periods))
    with pytest.raises(TrainingDiverged) as info:
        train_spread_model(power, periods, actual, spread, "accuracy", epochs=30, learning_rate=1e6)
    assert np.all(np.isfinite(info.value.model.W1))
    round_trip = ErrorShapingModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(round_trip.predict(power, periods), model.predict(power, periods))
