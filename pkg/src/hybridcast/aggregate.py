"""Non-parametric aggregation of component quantile forecasts.

Each component's dense quantiles are turned into a piecewise-linear CDF on a
uniform grid, differenced into a density, convolved with the other component
(conditional independence), and the total's quantiles read back off the
cumulative sum.
"""

from dataclasses import dataclass, field

import numpy as np

MASS_TOL = 1e-9


@dataclass
class QuantileForecast:
    """Quantile values for a batch of periods: ``values[i, j]`` is level ``levels[j]`` at period ``i``."""

    levels: np.ndarray
    values: np.ndarray
    timestamps: np.ndarray = field(default=None)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(np.diff(self.levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if np.any(self.levels <= 0) or np.any(self.levels >= 1):
            raise ValueError("levels must lie in (0, 1)")
        if self.values.shape[1] != self.levels.size:
            raise ValueError("one value per level is required")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps)
            if self.timestamps.shape[0] != self.values.shape[0]:
                raise ValueError("one timestamp per row is required")

    def __len__(self):
        return self.values.shape[0]

    def column(self, tau):
        idx = np.flatnonzero(np.isclose(self.levels, tau))
        if idx.size == 0:
            raise KeyError(f"level {tau} not in forecast")
        return self.values[:, idx[0]]

    def subset(self, rows):
        ts = None if self.timestamps is None else self.timestamps[rows]
        return QuantileForecast(self.levels, self.values[rows], ts)


@dataclass
class DiscreteDistribution:
    """Density and CDF on the grid ``grid_start + k * delta``.

    ``cdf[k]`` is the probability mass at or below grid point ``k``; the
    density carries the mass of the cell ending at that point.
    """

    grid_start: float
    delta: float
    density: np.ndarray
    cdf: np.ndarray

    @property
    def size(self):
        return self.density.size

    @property
    def grid(self):
        return self.grid_start + np.arange(self.size) * self.delta

    @property
    def mass(self):
        return float(np.sum(self.density) * self.delta)

    def mean(self):
        return float(np.sum(self.grid * self.density) * self.delta)

    def var(self):
        m = self.mean()
        return float(np.sum((self.grid - m) ** 2 * self.density) * self.delta)


def rearrange_monotone(values):
    """Sort quantile values ascending along the last axis (quantile rearrangement)."""
    return np.sort(np.asarray(values, dtype=float), axis=-1)


def support_grid(lower, upper, delta):
    """Grid (start, size) covering [lower, upper] with spacing ``delta``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    size = int(np.ceil((upper - lower) / delta - 1e-9)) + 1
    return float(lower), max(size, 2)


def _piecewise_cdf(x, knots_x, knots_p):
    # right-continuous linear interpolation; tied knots resolve to the largest p
    idx = np.searchsorted(knots_x, x, side="right") - 1
    out = np.empty_like(x)
    below = idx < 0
    out[below] = 0.0
    last = idx >= knots_x.size - 1
    out[last] = knots_p[-1]
    mid = ~(below | last)
    i = idx[mid]
    x0, x1 = knots_x[i], knots_x[i + 1]
    p0, p1 = knots_p[i], knots_p[i + 1]
    out[mid] = p0 + (x[mid] - x0) / (x1 - x0) * (p1 - p0)
    return out


def cdf_from_quantiles(levels, values, grid_start, delta, size, lower=None, upper=None):
    """Piecewise-linear CDF through ``(values[i], levels[i])`` evaluated on a grid.

    Below the first knot the CDF ramps linearly from ``(lower, 0)``; above the
    last knot it ramps to ``(upper, 1)``. Support bounds default to the grid ends.
    """
    levels = np.asarray(levels, dtype=float)
    values = rearrange_monotone(values)
    grid_end = grid_start + (size - 1) * delta
    lower = grid_start if lower is None else float(lower)
    upper = grid_end if upper is None else float(upper)
    if lower < grid_start - 1e-9 * max(1.0, abs(grid_start)) or upper > grid_end + 1e-9 * max(1.0, abs(grid_end)):
        raise ValueError("grid does not cover the support")
    values = np.clip(values, lower, upper)
    spread = values[-1] - values[0]
    if spread > 0:
        grid = grid_start + np.arange(size) * delta
        inside = np.count_nonzero((grid >= values[0]) & (grid <= values[-1]))
        if inside < 3:
            raise ValueError("grid resolution too coarse for the quantile spread")
    knots_x = np.concatenate([[lower], values, [upper]])
    knots_p = np.concatenate([[0.0], levels, [1.0]])
    grid = grid_start + np.arange(size) * delta
    cdf = _piecewise_cdf(grid, knots_x, knots_p)
    cdf = np.clip(cdf, 0.0, 1.0)
    cdf[-1] = 1.0
    density = np.diff(cdf, prepend=0.0) / delta
    return DiscreteDistribution(float(grid_start), float(delta), density, cdf)


def pdf_from_cdf(dist):
    """Density by first differences of the CDF; negative cells clipped, mass renormalised."""
    density = np.diff(np.asarray(dist.cdf, dtype=float), prepend=0.0) / dist.delta
    density = np.clip(density, 0.0, None)
    mass = np.sum(density) * dist.delta
    if mass <= 0:
        raise ValueError("distribution carries no mass")
    density = density / mass
    return DiscreteDistribution(dist.grid_start, dist.delta, density, _cumulate(density, dist.delta))


def _cumulate(density, delta):
    cdf = np.cumsum(density) * delta
    cdf = np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)
    cdf[-1] = 1.0
    return cdf


def cdf_from_pdf(dist):
    """Running sum of the density, final value forced to exactly one."""
    return DiscreteDistribution(dist.grid_start, dist.delta, np.asarray(dist.density, dtype=float).copy(),
                                _cumulate(np.asarray(dist.density, dtype=float), dist.delta))


def convolve(pdf_a, pdf_b):
    """Density of the sum of two independent variables by direct discrete convolution."""
    if not np.isclose(pdf_a.delta, pdf_b.delta, rtol=1e-12, atol=0.0):
        raise ValueError(f"grid spacing mismatch: {pdf_a.delta} vs {pdf_b.delta}")
    delta = pdf_a.delta
    density = np.convolve(pdf_a.density, pdf_b.density) * delta
    mass = np.sum(density) * delta
    density = density / mass
    return DiscreteDistribution(pdf_a.grid_start + pdf_b.grid_start, delta, density, _cumulate(density, delta))


def quantiles_from_cdf(dist, levels):
    """Generalised inverse ``inf{y : F(y) >= q}``, linear inside the crossing cell."""
    levels = np.asarray(levels, dtype=float)
    if np.any(levels <= 0) or np.any(levels >= 1):
        raise ValueError("levels must lie in (0, 1)")
    cdf = np.asarray(dist.cdf, dtype=float)
    idx = np.searchsorted(cdf, levels, side="left")
    idx = np.clip(idx, 0, cdf.size - 1)
    out = dist.grid_start + idx * dist.delta
    inner = idx > 0
    i = idx[inner]
    c0, c1 = cdf[i - 1], cdf[i]
    frac = (levels[inner] - c0) / (c1 - c0)
    out[inner] = dist.grid_start + (i - 1 + frac) * dist.delta
    return out


def check_mass(dist, tol=MASS_TOL):
    err = abs(dist.mass - 1.0)
    if err > tol:
        raise ValueError(f"distribution mass off by {err:.3e}")
    return err


def component_distribution(levels, values, delta, capacity, audit=None):
    start, size = support_grid(0.0, capacity, delta)
    dist = pdf_from_cdf(cdf_from_quantiles(levels, values, start, delta, size, lower=0.0, upper=capacity))
    _record(audit, dist)
    return dist


def _record(audit, dist):
    err = check_mass(dist)
    if audit is not None:
        audit["n_distributions"] = audit.get("n_distributions", 0) + 1
        audit["max_mass_error"] = max(audit.get("max_mass_error", 0.0), err)


def _level_values(levels, values, targets):
    return np.interp(targets, levels, values)


def aggregate_quantiles(wind, solar, levels, wind_capacity, solar_capacity, delta=None, audit=None,
                        return_distributions=False):
    """Total-generation quantiles from wind and solar quantile forecasts.

    Rows where either component is near-degenerate (spread below two grid
    cells) use the quantile-sum shortcut, which is exact for a point mass.
    """
    levels = np.asarray(levels, dtype=float)
    if len(wind) != len(solar):
        raise ValueError("wind and solar forecasts are not aligned")
    if delta is None:
        delta = (wind_capacity + solar_capacity) / 2048.0
    w_vals = rearrange_monotone(wind.values)
    s_vals = rearrange_monotone(solar.values)
    out = np.empty((len(wind), levels.size))
    dists = []
    for i in range(len(wind)):
        wv, sv = w_vals[i], s_vals[i]
        if sv[-1] - sv[0] < 2 * delta or wv[-1] - wv[0] < 2 * delta:
            out[i] = _level_values(wind.levels, wv, levels) + _level_values(solar.levels, sv, levels)
            dists.append(None)
            continue
        fw = component_distribution(wind.levels, wv, delta, wind_capacity, audit)
        fs = component_distribution(solar.levels, sv, delta, solar_capacity, audit)
        total = convolve(fw, fs)
        _record(audit, total)
        out[i] = quantiles_from_cdf(total, levels)
        dists.append(total)
    result = QuantileForecast(levels, out, wind.timestamps)
    if return_distributions:
        return result, dists
    return result


def quantile_sum(wind, solar, levels):
    """Level-by-level sum of component quantiles (the naive aggregation)."""
    levels = np.asarray(levels, dtype=float)
    w = np.array([_level_values(wind.levels, v, levels) for v in rearrange_monotone(wind.values)])
    s = np.array([_level_values(solar.levels, v, levels) for v in rearrange_monotone(solar.values)])
    return QuantileForecast(levels, w + s, wind.timestamps)
