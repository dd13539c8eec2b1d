"""Online polynomial post-processing of quantile forecasts.

A cubic without intercept, ``b1*y + b2*y**2 + b3*y**3``, is fitted per level by
L1-penalised quantile regression on a rolling window of recent
(forecast, actual) pairs. Forecasts and actuals are scaled by the window's
largest forecast before fitting, so the penalty acts on the coefficients of the
polynomial in that normalised unit; coefficients are reported in original units.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from hybridcast.aggregate import QuantileForecast, rearrange_monotone
from hybridcast.metrics import pinball
from hybridcast.qreg import quantile_regression

log = logging.getLogger(__name__)

MIN_SAMPLES = 10
LAMBDA_FACTORS = (0.001, 0.01, 0.1, 1.0, 10.0)
MAX_WINDOW_DAYS = 120
TIE_TOL = 1e-9


@dataclass
class PostProcessModel:
    levels: np.ndarray
    coefficients: np.ndarray
    penalties: np.ndarray
    fitted_on: int = 0
    capacity: float = np.inf

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1, 3)
        self.penalties = np.broadcast_to(np.asarray(self.penalties, dtype=float), self.levels.shape).copy()
        if self.coefficients.shape[0] != self.levels.size:
            raise ValueError("one coefficient triple per level is required")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("post-processing coefficients must be finite")
        if np.any(self.penalties < 0):
            raise ValueError("penalties must be non-negative")

    @classmethod
    def identity(cls, levels, capacity=np.inf):
        levels = np.asarray(levels, dtype=float)
        coefs = np.tile([1.0, 0.0, 0.0], (levels.size, 1))
        return cls(levels, coefs, np.zeros(levels.size), 0, capacity)

    def to_dict(self):
        return {
            "levels": self.levels.tolist(),
            "coefficients": self.coefficients.tolist(),
            "penalties": self.penalties.tolist(),
            "fitted_on": int(self.fitted_on),
            "capacity": None if np.isinf(self.capacity) else float(self.capacity),
        }

    @classmethod
    def from_dict(cls, d):
        cap = np.inf if d.get("capacity") is None else float(d["capacity"])
        return cls(d["levels"], d["coefficients"], d["penalties"], d.get("fitted_on", 0), cap)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def apply_poly(model, forecast, capacity=None):
    """Apply the per-level cubic, clamp to [0, capacity] and rearrange across levels."""
    if not np.allclose(forecast.levels, model.levels):
        raise ValueError("forecast levels do not match the post-processing model")
    y = forecast.values
    b = model.coefficients
    out = b[None, :, 0] * y + b[None, :, 1] * y ** 2 + b[None, :, 2] * y ** 3
    cap = model.capacity if capacity is None else capacity
    cap = np.asarray(cap, dtype=float).reshape(-1, 1) if np.ndim(cap) else cap
    out = np.clip(out, 0.0, cap)
    return QuantileForecast(forecast.levels, rearrange_monotone(out), forecast.timestamps)


@dataclass
class OnlineWindow:
    """Recent (forecast per level, actual) pairs in time order."""

    timestamps: np.ndarray
    forecasts: np.ndarray
    actuals: np.ndarray
    levels: np.ndarray
    capacity: np.ndarray = field(default=None)

    def __post_init__(self):
        self.timestamps = np.asarray(pd.DatetimeIndex(pd.to_datetime(self.timestamps, utc=True)).tz_localize(None),
                                     dtype="datetime64[ns]")
        self.forecasts = np.atleast_2d(np.asarray(self.forecasts, dtype=float))
        self.actuals = np.asarray(self.actuals, dtype=float)
        self.levels = np.asarray(self.levels, dtype=float)
        n = self.actuals.size
        if self.forecasts.shape != (n, self.levels.size) or self.timestamps.shape[0] != n:
            raise ValueError("window arrays are misaligned")
        if n > 1 and np.any(np.diff(self.timestamps.astype(np.int64)) <= 0):
            raise ValueError("window timestamps must be strictly increasing")
        if np.any(self.actuals < 0):
            raise ValueError("actuals must be non-negative")
        if self.capacity is not None:
            self.capacity = np.broadcast_to(np.asarray(self.capacity, dtype=float), (n,)).copy()

    def __len__(self):
        return self.actuals.size

    def slice(self, rows):
        cap = None if self.capacity is None else self.capacity[rows]
        return OnlineWindow(self.timestamps[rows], self.forecasts[rows], self.actuals[rows], self.levels, cap)

    def append(self, other, max_days=MAX_WINDOW_DAYS):
        if len(other) == 0:
            return self
        if len(self) and other.timestamps[0] <= self.timestamps[-1]:
            raise ValueError("new samples must follow the window end")
        cap = None
        if self.capacity is not None or other.capacity is not None:
            ca = self.capacity if self.capacity is not None else np.full(len(self), np.nan)
            cb = other.capacity if other.capacity is not None else np.full(len(other), np.nan)
            cap = np.concatenate([ca, cb])
        merged = OnlineWindow(
            np.concatenate([self.timestamps, other.timestamps]),
            np.vstack([self.forecasts, other.forecasts]),
            np.concatenate([self.actuals, other.actuals]),
            self.levels,
            cap,
        )
        if max_days is not None and len(merged):
            ts = merged.timestamps
            keep = ts > ts[-1] - np.timedelta64(int(max_days), "D")
            merged = merged.slice(np.flatnonzero(keep))
        return merged


def _design(forecast, m):
    u = np.asarray(forecast, dtype=float) / m
    return np.column_stack([u, u ** 2, u ** 3])


def fit_lasso_qr(forecast, actual, tau, lam):
    """L1-penalised quantile regression of ``actual`` on a cubic in ``forecast``.

    Minimises the mean pinball loss plus ``lam * (|b1| + |b2| + |b3|)`` with
    forecast and actual divided by the window's largest forecast, so ``lam``
    is a per-sample penalty on the normalised coefficients. Returns
    ``(b1, b2, b3)`` in original units.
    """
    forecast = np.asarray(forecast, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if forecast.size < MIN_SAMPLES:
        raise ValueError(f"window too small: {forecast.size} < {MIN_SAMPLES} samples")
    if forecast.shape != actual.shape:
        raise ValueError("forecast and actual are misaligned")
    m = float(np.max(np.abs(forecast)))
    if m == 0.0:
        return np.zeros(3) if lam > 0 else np.array([1.0, 0.0, 0.0])
    X = _design(forecast, m)
    b = quantile_regression(X, actual / m, tau, lam * forecast.size)
    return b / np.array([1.0, m, m * m])


def lasso_qr_objective(forecast, actual, tau, lam, coefficients):
    """Penalised mean pinball objective in normalised units for original-unit coefficients."""
    forecast = np.asarray(forecast, dtype=float)
    m = float(np.max(np.abs(forecast)))
    b = np.asarray(coefficients, dtype=float) * np.array([1.0, m, m * m])
    pred = _design(forecast, m) @ b
    return float(np.mean(pinball(np.asarray(actual) / m, pred, tau)) + lam * np.sum(np.abs(b)))


def lambda_grid(actual, forecast):
    m = float(np.max(np.abs(forecast))) or 1.0
    return np.array(LAMBDA_FACTORS) * float(np.mean(np.abs(actual))) / m


def select_lambda(forecast, actual, tau, grid=None):
    """Chronological 60/40 split; return ``(best_lambda, coefficients refit on all data)``.

    Ties in validation loss (within a relative ``TIE_TOL`` of the mean
    absolute actual) go to the smaller penalty.
    """
    forecast = np.asarray(forecast, dtype=float)
    actual = np.asarray(actual, dtype=float)
    n = actual.size
    n_train = int(round(0.6 * n))
    if n_train < MIN_SAMPLES or n - n_train < 1:
        raise ValueError("degenerate 60/40 split")
    grid = lambda_grid(actual, forecast) if grid is None else np.asarray(grid, dtype=float)
    grid = np.sort(grid)
    best_lam, best_loss = None, np.inf
    tol = TIE_TOL * max(float(np.mean(np.abs(actual))), np.finfo(float).tiny)
    for lam in grid:
        b = fit_lasso_qr(forecast[:n_train], actual[:n_train], tau, lam)
        f = forecast[n_train:]
        pred = b[0] * f + b[1] * f ** 2 + b[2] * f ** 3
        loss = float(np.mean(pinball(actual[n_train:], pred, tau)))
        if loss < best_loss - tol:
            best_lam, best_loss = float(lam), loss
    return best_lam, fit_lasso_qr(forecast, actual, tau, best_lam)


def fit_window(window, capacity=None, daylight_only=True):
    """Select a penalty and fit coefficients for every level in ``window``."""
    rows = np.arange(len(window))
    if daylight_only:
        rows = rows[np.any(window.forecasts > 0, axis=1) | (window.actuals > 0)]
    coefs, lams = [], []
    for j, tau in enumerate(window.levels):
        lam, b = select_lambda(window.forecasts[rows, j], window.actuals[rows], tau)
        coefs.append(b)
        lams.append(lam)
    if capacity is None:
        capacity = np.inf
        if window.capacity is not None and np.any(np.isfinite(window.capacity)):
            capacity = float(window.capacity[np.isfinite(window.capacity)][-1])
    return PostProcessModel(window.levels, np.array(coefs), np.array(lams), rows.size, capacity)


def rolling_update(model, window, new_day, max_days=MAX_WINDOW_DAYS):
    """Append a day of samples and refit; keep the previous model if fitting fails.

    Returns ``(model, window)``.
    """
    if new_day is None or len(new_day) == 0:
        return model, window
    window = window.append(new_day, max_days=max_days)
    try:
        model = fit_window(window)
    except (ValueError, FloatingPointError) as exc:
        log.warning("post-processing refit failed, keeping previous model: %s", exc)
    return model, window
