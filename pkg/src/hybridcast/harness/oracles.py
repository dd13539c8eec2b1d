"""Brute-force references, deliberately independent of the routines they check."""

import numpy as np

from hybridcast.aggregate import QuantileForecast

MIN_DRAWS = 100_000


def mc_aggregate_oracle(wind_truth, solar_truth, levels, n_draws=1_000_000, seed=0, timestamps=None):
    """Empirical quantiles of y_w + y_s from independent conditional draws.

    The same standard-normal draws are reused across rows (common random
    numbers); within a row the wind and solar draws are independent.
    """
    if n_draws < MIN_DRAWS:
        raise ValueError(f"n_draws must be at least {MIN_DRAWS}")
    levels = np.asarray(levels, dtype=float)
    rng = np.random.default_rng(seed)
    z_w = rng.standard_normal(n_draws)
    z_s = rng.standard_normal(n_draws)
    n = len(wind_truth)
    out = np.empty((n, levels.size))
    buf = np.empty(n_draws)
    tmp = np.empty(n_draws)
    # order statistics needed by linear-interpolation quantiles of n_draws samples
    pos = levels * (n_draws - 1)
    lo_idx = np.floor(pos).astype(int)
    hi_idx = np.minimum(lo_idx + 1, n_draws - 1)
    frac = pos - lo_idx
    kth = np.unique(np.concatenate([lo_idx, hi_idx]))
    zw_sorted = np.partition(z_w, kth)
    for i in range(n):
        if solar_truth.sigma[i] == 0.0:
            # sum is a monotone map of the wind draw, so its order statistics are
            # the mapped order statistics of z_w (same sample, no re-sort needed)
            c = np.clip(solar_truth.mu[i], solar_truth.lower[i], solar_truth.upper[i])
            lo = np.clip(wind_truth.mu[i] + wind_truth.sigma[i] * zw_sorted[lo_idx],
                         wind_truth.lower[i], wind_truth.upper[i])
            hi = np.clip(wind_truth.mu[i] + wind_truth.sigma[i] * zw_sorted[hi_idx],
                         wind_truth.lower[i], wind_truth.upper[i])
            out[i] = c + lo + frac * (hi - lo)
            continue
        np.multiply(z_w, wind_truth.sigma[i], out=buf)
        buf += wind_truth.mu[i]
        np.clip(buf, wind_truth.lower[i], wind_truth.upper[i], out=buf)
        np.multiply(z_s, solar_truth.sigma[i], out=tmp)
        tmp += solar_truth.mu[i]
        np.clip(tmp, solar_truth.lower[i], solar_truth.upper[i], out=tmp)
        buf += tmp
        out[i] = np.quantile(buf, levels)
    return QuantileForecast(levels, out, timestamps)


def grid_bid_oracle(yhat, spread_mean, step=0.01, upper=1800.0, penalty=0.07):
    """Exhaustive maximiser of ``spread*e - penalty*(yhat - e)**2`` over ``{0, step, ..., upper}``."""
    if step <= 0:
        raise ValueError("step must be positive")
    grid = np.arange(0.0, upper + 0.5 * step, step)
    yhat = np.atleast_1d(np.asarray(yhat, dtype=float))
    spread_mean = np.broadcast_to(np.asarray(spread_mean, dtype=float), yhat.shape)
    out = np.empty(yhat.shape)
    for i, (y, s) in enumerate(zip(yhat, spread_mean)):
        objective = s * grid - penalty * (y - grid) ** 2
        out[i] = grid[int(np.argmax(objective))]
    return out if out.size > 1 else float(out[0])


def normal_sum_quantiles(mu_a, sd_a, mu_b, sd_b, levels):
    """Analytic quantiles of the sum of two independent normals."""
    from scipy.stats import norm
    return mu_a + mu_b + np.hypot(sd_a, sd_b) * norm.ppf(np.asarray(levels, dtype=float))
