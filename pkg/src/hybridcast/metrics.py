"""Scoring rules for probabilistic forecasts.

All losses use the non-negative pinball convention
``tau * (y - yhat)`` when ``y >= yhat`` and ``(1 - tau) * (yhat - y)`` otherwise.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IntervalForecast:
    lower: float
    upper: float
    alpha: float = 0.2

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("interval lower bound exceeds upper bound")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def pinball(y, yhat, tau):
    """Elementwise pinball loss; broadcasts over ``y``, ``yhat`` and ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0) or np.any(tau >= 1):
        raise ValueError("tau must lie in (0, 1)")
    diff = np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)
    loss = np.where(diff >= 0, tau * diff, (tau - 1.0) * diff)
    return loss if loss.ndim else float(loss)


def mpl(actuals, forecasts, levels):
    """Mean pinball loss: average over levels, then over periods.

    ``forecasts`` has shape (n_periods, n_levels); ``actuals`` has shape (n_periods,).
    """
    y = np.asarray(actuals, dtype=float)
    q = np.atleast_2d(np.asarray(forecasts, dtype=float))
    levels = np.asarray(levels, dtype=float)
    if q.shape != (y.shape[0], levels.shape[0]):
        raise ValueError(f"shape mismatch: forecasts {q.shape}, actuals {y.shape}, levels {levels.shape}")
    if y.size == 0:
        raise ValueError("no periods to score")
    return float(np.mean(np.mean(pinball(y[:, None], q, levels[None, :]), axis=1)))


def crps(dist, y):
    """CRPS of a discrete distribution against a scalar observation.

    The CDF is treated as a step function on the grid, padded with three
    grid-lengths of zeros below and ones above so both tails are covered.
    """
    cdf = np.asarray(dist.cdf, dtype=float)
    n = cdf.size
    delta = float(dist.delta)
    pad = 3 * n
    lo = float(dist.grid_start) - pad * delta
    hi = float(dist.grid_start) + (n - 1 + pad) * delta
    if not lo <= y <= hi:
        raise ValueError("observation outside the extended CRPS grid")
    grid = lo + np.arange(n + 2 * pad) * delta
    full = np.concatenate([np.zeros(pad), cdf, np.ones(pad)])
    step = (grid >= y).astype(float)
    return float(np.sum((full - step) ** 2) * delta)


def mcrps(dists, actuals):
    actuals = np.asarray(actuals, dtype=float)
    if len(dists) != actuals.size:
        raise ValueError("shape mismatch between distributions and actuals")
    return float(np.mean([crps(d, y) for d, y in zip(dists, actuals)]))


def winkler(lower, upper, y, alpha=0.2):
    """Winkler interval score; vectorised over arrays."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(lower > upper):
        raise ValueError("interval lower bound exceeds upper bound")
    width = upper - lower
    score = width + (2.0 / alpha) * (np.maximum(lower - y, 0.0) + np.maximum(y - upper, 0.0))
    return score if score.ndim else float(score)


def mws(lower, upper, actuals, alpha=0.2):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if not lower.shape == upper.shape == actuals.shape:
        raise ValueError("shape mismatch")
    if actuals.size == 0:
        raise ValueError("no samples to score")
    return float(np.mean(winkler(lower, upper, actuals, alpha)))


def mws_from_quantiles(forecasts, levels, actuals, alpha=0.2):
    """MWS using the q10 / q90 columns of a quantile matrix as the interval."""
    levels = np.asarray(levels, dtype=float)
    lo = int(np.argmin(np.abs(levels - alpha / 2)))
    hi = int(np.argmin(np.abs(levels - (1 - alpha / 2))))
    if not (np.isclose(levels[lo], alpha / 2) and np.isclose(levels[hi], 1 - alpha / 2)):
        raise ValueError(f"levels {alpha / 2} and {1 - alpha / 2} are required")
    q = np.asarray(forecasts, dtype=float)
    return mws(q[:, lo], q[:, hi], actuals, alpha)


def empirical_coverage(forecast, actuals, tau=None):
    """Fraction of observations at or below the forecast level values."""
    forecast = np.asarray(forecast, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if actuals.size == 0:
        raise ValueError("empty sample")
    forecast = np.broadcast_to(forecast, actuals.shape)
    return float(np.mean(actuals <= forecast))
