"""Day-ahead settlement, spread estimation and stochastic bidding."""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

IMBALANCE_PENALTY = 0.07
# 1 / (2 * 0.07) ~ 7.14 and 1 / (4 * 0.07) ~ 3.57, kept exact
BID_SLOPE = 1.0 / (2.0 * IMBALANCE_PENALTY)
SPREAD_WEIGHT = 1.0 / (4.0 * IMBALANCE_PENALTY)
BID_MIN = 0.0
BID_MAX = 1800.0
PERIODS_PER_DAY = 48
DEFAULT_WINDOW = 2880


def period_of_day(timestamps):
    """Half-hour settlement period 1..48 of each UTC timestamp."""
    ts = pd.DatetimeIndex(pd.to_datetime(timestamps, utc=True))
    return np.asarray(ts.hour * 2 + ts.minute // 30 + 1, dtype=int)


@dataclass
class MarketSeries:
    """Aligned half-hourly day-ahead price, imbalance price and generation."""

    timestamps: np.ndarray
    da_price: np.ndarray
    ss_price: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(pd.DatetimeIndex(pd.to_datetime(self.timestamps, utc=True)).tz_localize(None),
                                     dtype="datetime64[ns]")
        self.da_price = np.asarray(self.da_price, dtype=float)
        self.ss_price = np.asarray(self.ss_price, dtype=float)
        self.actual = np.asarray(self.actual, dtype=float)
        n = self.timestamps.size
        if not (self.da_price.size == self.ss_price.size == self.actual.size == n):
            raise ValueError("market columns are misaligned")
        if n > 1 and np.any(np.diff(self.timestamps.astype(np.int64)) <= 0):
            raise ValueError("market timestamps must be strictly increasing")

    def __len__(self):
        return self.timestamps.size

    @property
    def spread(self):
        return self.da_price - self.ss_price

    @property
    def period(self):
        return period_of_day(self.timestamps)

    @property
    def day(self):
        return self.timestamps.astype("datetime64[D]")

    def slice(self, rows):
        return MarketSeries(self.timestamps[rows], self.da_price[rows], self.ss_price[rows], self.actual[rows])

    def to_frame(self):
        return pd.DataFrame({
            "timestamp": pd.DatetimeIndex(self.timestamps).tz_localize("UTC"),
            "da_price": self.da_price,
            "ss_price": self.ss_price,
            "actual": self.actual,
        })

    @classmethod
    def from_frame(cls, df):
        missing = {"timestamp", "da_price", "ss_price", "actual"} - set(df.columns)
        if missing:
            raise ValueError(f"market data lacks columns {sorted(missing)}")
        return cls(df["timestamp"].to_numpy(), df["da_price"], df["ss_price"], df["actual"])


@dataclass
class SpreadEstimator:
    """Per-period mean of the price spread over a trailing window."""

    means: np.ndarray
    window: int = DEFAULT_WINDOW

    def predict(self, periods):
        return self.means[np.asarray(periods, dtype=int) - 1]


def estimate_spread(history, w=DEFAULT_WINDOW):
    """Mean spread for each period of day over the last ``w`` records.

    Periods with no samples in the window fall back to the window mean.
    """
    if len(history) == 0:
        raise ValueError("empty market history")
    rows = slice(max(0, len(history) - int(w)), len(history))
    spread = history.spread[rows]
    period = history.period[rows]
    ok = np.isfinite(spread)
    spread, period = spread[ok], period[ok]
    if spread.size == 0:
        raise ValueError("no finite spreads in the window")
    sums = np.bincount(period - 1, weights=spread, minlength=PERIODS_PER_DAY)
    counts = np.bincount(period - 1, minlength=PERIODS_PER_DAY)
    means = np.full(PERIODS_PER_DAY, float(np.mean(spread)))
    has = counts > 0
    means[has] = sums[has] / counts[has]
    return SpreadEstimator(means, int(w))


def optimal_bid(yhat, spread_mean):
    """KKT solution of the per-period expected-revenue problem, clipped to market bounds."""
    bid = np.clip(np.asarray(yhat, dtype=float) + BID_SLOPE * np.asarray(spread_mean, dtype=float), BID_MIN, BID_MAX)
    return bid if bid.ndim else float(bid)


def period_revenue(bids, da_price, ss_price, actual):
    bids = np.asarray(bids, dtype=float)
    imbalance = np.asarray(actual, dtype=float) - bids
    return bids * da_price + imbalance * ss_price - IMBALANCE_PENALTY * imbalance ** 2


def settle(bids, market):
    """Total trading revenue of a bid schedule against realised prices and generation."""
    bids = np.asarray(bids, dtype=float)
    if bids.shape != (len(market),):
        raise ValueError(f"bid schedule of length {bids.size} does not match {len(market)} market periods")
    return float(np.sum(period_revenue(bids, market.da_price, market.ss_price, market.actual)))


def decision_revenue(bid, actual, spread):
    """Bid-dependent part of revenue: ``spread*e - 0.07*(y - e)**2``."""
    bid = np.asarray(bid, dtype=float)
    return np.asarray(spread) * bid - IMBALANCE_PENALTY * (np.asarray(actual) - bid) ** 2


def trading_loss(yhat, y, spread_hat, spread):
    """Closed-form revenue gap to the perfect-information bid (interior bids only)."""
    yhat, y = np.asarray(yhat, dtype=float), np.asarray(y, dtype=float)
    spread_hat, spread = np.asarray(spread_hat, dtype=float), np.asarray(spread, dtype=float)
    e_hat = yhat + BID_SLOPE * spread_hat
    e_true = y + BID_SLOPE * spread
    if np.any((e_hat < BID_MIN) | (e_hat > BID_MAX) | (e_true < BID_MIN) | (e_true > BID_MAX)):
        raise ValueError("formula valid for interior solutions only")
    a = yhat - y
    b = spread_hat - spread
    out = IMBALANCE_PENALTY * a ** 2 + SPREAD_WEIGHT * b ** 2 + a * b
    return out if out.ndim else float(out)


def trading_loss_direct(yhat, y, spread_hat, spread):
    """Revenue gap ``r(e*(y, spread)) - r(e*(yhat, spread_hat))`` with clipping."""
    best = decision_revenue(optimal_bid(y, spread), y, spread)
    got = decision_revenue(optimal_bid(yhat, spread_hat), y, spread)
    out = best - got
    return out if np.ndim(out) else float(out)


def loss_decomposition(yhat, y, spread_hat, spread):
    """Power, spread and cross terms of the trading loss, summed over periods."""
    a = np.asarray(yhat, dtype=float) - np.asarray(y, dtype=float)
    b = np.asarray(spread_hat, dtype=float) - np.asarray(spread, dtype=float)
    return {
        "power_term": float(np.sum(IMBALANCE_PENALTY * a ** 2)),
        "spread_term": float(np.sum(SPREAD_WEIGHT * b ** 2)),
        "cross_term": float(np.sum(a * b)),
    }


def ar_spread_forecast(history_spread, horizon=PERIODS_PER_DAY, order=48):
    """Least-squares AR(order) with intercept, iterated ``horizon`` steps ahead."""
    s = np.asarray(history_spread, dtype=float)
    s = s[np.isfinite(s)]
    if s.size < 2 * order + 1:
        raise ValueError(f"insufficient history for AR({order}): {s.size} samples")
    lagged = np.lib.stride_tricks.sliding_window_view(s[:-1], order)
    X = np.column_stack([np.ones(lagged.shape[0]), lagged[:, ::-1]])
    coef, *_ = np.linalg.lstsq(X, s[order:], rcond=None)
    buf = list(s[-order:])
    out = np.empty(horizon)
    for h in range(horizon):
        lags = np.array(buf[-order:][::-1])
        out[h] = coef[0] + coef[1:] @ lags
        buf.append(out[h])
    return out


BASELINES = ("q50", "mse", "naive", "seasonal_persistence", "ar")


def baseline_bid(strategy, forecast, history=None, window=DEFAULT_WINDOW, ar_order=48):
    """Bid schedule for one day under a baseline strategy.

    ``forecast`` is the day's power forecast (q50 or MSE model, caller's choice);
    ``history`` is the market record before the day.
    """
    forecast = np.asarray(forecast, dtype=float)
    if strategy in ("q50", "mse"):
        return np.clip(forecast, BID_MIN, BID_MAX)
    if history is None or len(history) == 0:
        raise ValueError(f"strategy {strategy!r} needs market history")
    if strategy == "naive":
        spread = history.spread[-int(window):]
        spread = spread[np.isfinite(spread)]
        if spread.size == 0:
            raise ValueError("insufficient history for naive spread")
        return optimal_bid(forecast, float(np.mean(spread)))
    if strategy == "seasonal_persistence":
        if len(history) < forecast.size:
            raise ValueError("insufficient history for seasonal persistence")
        return optimal_bid(forecast, history.spread[-forecast.size:])
    if strategy == "ar":
        pred = ar_spread_forecast(history.spread[-int(window):], forecast.size, ar_order)
        return optimal_bid(forecast, pred)
    raise ValueError(f"unknown baseline strategy {strategy!r}")
