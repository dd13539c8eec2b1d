"""Walk-forward daily trading backtest."""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from hybridcast.trading.error_shaping import train_error_shaping
from hybridcast.trading.strategy import (
    PERIODS_PER_DAY,
    ar_spread_forecast,
    baseline_bid,
    estimate_spread,
    loss_decomposition,
    optimal_bid,
    period_revenue,
)

log = logging.getLogger(__name__)

STRATEGIES = ("perfect", "st-mse", "st-q50", "q50", "mse", "naive", "persistence", "ar", "e2e")


@dataclass
class BacktestReport:
    daily: pd.DataFrame
    totals: dict
    decomposition: dict
    scatter: pd.DataFrame = field(default=None)
    skipped_days: list = field(default_factory=list)


def _day_bids(strategy, day_fc, day_periods, history, window, e2e_model):
    """Return (bids, power forecast used, spread estimate used)."""
    q50 = day_fc["q50"].to_numpy(dtype=float)
    mse = day_fc["mse"].to_numpy(dtype=float) if "mse" in day_fc else q50
    zeros = np.zeros(q50.size)
    if strategy in ("st-mse", "st-q50"):
        power = mse if strategy == "st-mse" else q50
        spread_hat = estimate_spread(history, window).predict(day_periods)
        return optimal_bid(power, spread_hat), power, spread_hat
    if strategy in ("q50", "mse"):
        power = q50 if strategy == "q50" else mse
        return baseline_bid(strategy, power), power, zeros
    if strategy == "naive":
        bids = baseline_bid("naive", mse, history, window)
        spread = history.spread[-window:]
        return bids, mse, np.full(q50.size, float(np.mean(spread[np.isfinite(spread)])))
    if strategy == "persistence":
        bids = baseline_bid("seasonal_persistence", mse, history, window)
        return bids, mse, history.spread[-q50.size:]
    if strategy == "ar":
        spread_hat = ar_spread_forecast(history.spread[-window:], q50.size)
        return optimal_bid(mse, spread_hat), mse, spread_hat
    if strategy == "e2e":
        spread_hat = e2e_model.predict(mse, day_periods)
        return optimal_bid(mse, spread_hat), mse, spread_hat
    raise ValueError(f"unknown strategy {strategy!r}")


def backtest(strategies, market, forecasts, window_days=60, start=None, e2e_model=None, e2e_epochs=100, seed=0):
    """Walk forward one day at a time: estimate from the trailing window, bid, settle.

    ``forecasts`` is a frame with ``timestamp``, ``q50`` and optionally ``mse``
    columns aligned with ``market``. Testing starts once ``window_days`` of
    history exist (or at ``start``). Days with missing periods are skipped.
    """
    strategies = list(strategies)
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ValueError(f"unknown strategies {unknown}")
    if "perfect" not in strategies:
        strategies = ["perfect"] + strategies
    fc = forecasts.copy()
    fc["timestamp"] = pd.to_datetime(fc["timestamp"], utc=True).dt.tz_localize(None)
    mts = pd.DatetimeIndex(market.timestamps)
    fc = fc.set_index("timestamp").reindex(mts)
    window = int(window_days) * PERIODS_PER_DAY
    days = np.unique(market.day)
    first = days[0] + np.timedelta64(int(window_days), "D") if start is None else np.datetime64(start, "D")
    test_days = days[days >= first]
    periods = market.period
    day_of_row = market.day

    if "e2e" in strategies and e2e_model is None:
        warm = day_of_row < first
        if not np.any(warm):
            raise ValueError("no warm-up history to train the e2e strategy")
        mse_col = "mse" if "mse" in fc else "q50"
        power = fc[mse_col].to_numpy(dtype=float)[warm]
        ok = np.isfinite(power) & np.isfinite(market.spread[warm])
        e2e_model, _ = train_error_shaping(power[ok], periods[warm][ok], market.actual[warm][ok],
                                           market.spread[warm][ok], epochs=e2e_epochs, seed=seed)

    rows, skipped = [], []
    decomp = {s: {"power_term": 0.0, "spread_term": 0.0, "cross_term": 0.0} for s in strategies}
    scatter = []
    for day in test_days:
        idx = np.flatnonzero(day_of_row == day)
        day_fc = fc.iloc[idx]
        complete = (idx.size == PERIODS_PER_DAY and np.all(np.isfinite(day_fc["q50"].to_numpy(dtype=float)))
                    and np.all(np.isfinite(market.spread[idx])) and np.all(np.isfinite(market.actual[idx])))
        if not complete:
            log.warning("skipping %s: incomplete data", day)
            skipped.append(str(day))
            continue
        hist = market.slice(np.flatnonzero(day_of_row < day)[-window:])
        if len(hist) < PERIODS_PER_DAY:
            skipped.append(str(day))
            continue
        y = market.actual[idx]
        spread = market.spread[idx]
        row = {"day": str(day)}
        for s in strategies:
            if s == "perfect":
                power, spread_hat = y, spread
                bids = optimal_bid(y, spread)
            else:
                bids, power, spread_hat = _day_bids(s, day_fc, periods[idx], hist, window, e2e_model)
            rev = period_revenue(bids, market.da_price[idx], market.ss_price[idx], y)
            row[s] = float(np.sum(rev))
            for k, v in loss_decomposition(power, y, spread_hat, spread).items():
                decomp[s][k] += v
            if s != "perfect":
                perfect = period_revenue(optimal_bid(y, spread), market.da_price[idx], market.ss_price[idx], y)
                for i in range(idx.size):
                    scatter.append((pd.Timestamp(market.timestamps[idx[i]]).tz_localize("UTC"), s,
                                    float(power[i] - y[i]), float(spread_hat[i] - spread[i]),
                                    float(perfect[i] - rev[i])))
        rows.append(row)
    daily = pd.DataFrame(rows, columns=["day"] + strategies)
    totals = {s: float(daily[s].sum()) if len(daily) else 0.0 for s in strategies}
    scatter_df = pd.DataFrame(scatter, columns=["timestamp", "strategy", "power_error", "spread_error", "loss"])
    return BacktestReport(daily, totals, decomp, scatter_df, skipped)
