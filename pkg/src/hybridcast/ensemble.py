"""Stacking of two sister quantile models and capacity-aware truncation."""

import json
from dataclasses import dataclass

import numpy as np

from hybridcast.aggregate import QuantileForecast
from hybridcast.metrics import pinball
from hybridcast.qreg import quantile_regression

TRUNCATION_GRID = np.round(np.arange(90, 101) / 100.0, 2)


def _values(forecast):
    if isinstance(forecast, QuantileForecast):
        return forecast.levels, forecast.values
    raise TypeError("expected a QuantileForecast")


@dataclass
class StackingCombiner:
    """Per-level affine weights ``(w_a, w_b, intercept)``."""

    levels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1, 3)
        if self.weights.shape[0] != self.levels.size:
            raise ValueError("one weight triple per level is required")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("stacking weights must be finite")

    def to_dict(self):
        return {"kind": "stacking", "levels": self.levels.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["levels"], d["weights"])


def _stack_level(pa, pb, y, tau):
    A = np.column_stack([pa, pb, np.ones_like(pa)])
    return quantile_regression(A, y, tau)


def fit_stacking(base_a, base_b, actual):
    """Fit per-level pinball-optimal affine combinations of two base forecasts.

    Each level is an exact linear quantile regression of the actual on the two
    base forecasts plus an intercept, so in-sample it never scores worse than
    either base alone. Rows where a base or the actual is missing are left out.
    """
    la, va = _values(base_a)
    lb, vb = _values(base_b)
    y = np.asarray(actual, dtype=float)
    if va.shape != vb.shape or va.shape[0] != y.size:
        raise ValueError("length mismatch between base forecasts and actuals")
    if not np.allclose(la, lb):
        raise ValueError("base forecasts use different level sets")
    ok = np.all(np.isfinite(va), axis=1) & np.all(np.isfinite(vb), axis=1) & np.isfinite(y)
    if not np.any(ok):
        raise ValueError("no aligned rows to fit the stacking model on")
    weights = np.array([_stack_level(va[ok, j], vb[ok, j], y[ok], tau) for j, tau in enumerate(la)])
    return StackingCombiner(la, weights)


def predict_stacked(comb, p_a, p_b):
    """Affine combination per level, unclipped; a missing source falls back to the other base model."""
    la, va = _values(p_a)
    _, vb = _values(p_b)
    if not np.allclose(la, comb.levels):
        raise ValueError("forecast levels do not match the combiner")
    w = comb.weights
    out = w[:, 0] * va + w[:, 1] * vb + w[:, 2]
    miss_a = ~np.all(np.isfinite(va), axis=1)
    miss_b = ~np.all(np.isfinite(vb), axis=1)
    out[miss_a] = vb[miss_a]
    out[miss_b] = va[miss_b]
    return QuantileForecast(la, out, p_a.timestamps)


@dataclass
class TruncationModel:
    """Per-level coefficients ``c_tau``; forecasts are capped at ``c_tau * Q``."""

    levels: np.ndarray
    coefficients: np.ndarray
    capacity: float = np.inf

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != self.levels.shape:
            raise ValueError("one coefficient per level is required")
        if np.any(self.coefficients < 0) or np.any(self.coefficients > 1):
            raise ValueError("truncation coefficients must lie in [0, 1]")
        if np.any(np.diff(self.coefficients) < -1e-12):
            raise ValueError("truncation coefficients must be non-decreasing in tau")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")

    def to_dict(self):
        cap = None if np.isinf(self.capacity) else float(self.capacity)
        return {"kind": "truncation", "levels": self.levels.tolist(),
                "coefficients": self.coefficients.tolist(), "capacity": cap}

    @classmethod
    def from_dict(cls, d):
        cap = np.inf if d.get("capacity") is None else float(d["capacity"])
        return cls(d["levels"], d["coefficients"], cap)


def apply_truncation(forecast, model, capacity=None):
    """``min(yhat, c_tau * Q)`` per level. ``capacity`` may be a per-row array."""
    if not np.allclose(forecast.levels, model.levels):
        raise ValueError("forecast levels do not match the truncation model")
    Q = model.capacity if capacity is None else capacity
    Q = np.asarray(Q, dtype=float).reshape(-1, 1) if np.ndim(Q) else float(Q)
    cap = model.coefficients[None, :] * Q
    return QuantileForecast(forecast.levels, np.minimum(forecast.values, cap), forecast.timestamps)


def pool_adjacent_violators(values, weights=None):
    """Least-squares non-decreasing fit."""
    values = np.asarray(values, dtype=float)
    weights = np.ones_like(values) if weights is None else np.asarray(weights, dtype=float)
    blocks = []
    for v, w in zip(values, weights):
        blocks.append([v, w, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            v2, w2, n2 = blocks.pop()
            v1, w1, n1 = blocks.pop()
            blocks.append([(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, n1 + n2])
    return np.concatenate([[v] * n for v, _, n in blocks])


def fit_truncation(actuals, forecast, capacity, grid=TRUNCATION_GRID):
    """Grid-search ``c_tau`` per level on a recent window, then enforce monotonicity.

    Ties go to the larger coefficient (less intervention).
    """
    y = np.asarray(actuals, dtype=float)
    if y.size == 0:
        raise ValueError("empty truncation window")
    if len(forecast) != y.size:
        raise ValueError("forecast and actuals are not aligned")
    Q = np.broadcast_to(np.asarray(capacity, dtype=float), y.shape)
    grid = np.sort(np.asarray(grid, dtype=float))[::-1]
    raw = np.empty(forecast.levels.size)
    for j, tau in enumerate(forecast.levels):
        best_c, best = grid[0], np.inf
        for c in grid:
            loss = float(np.sum(pinball(y, np.minimum(forecast.values[:, j], c * Q), tau)))
            if loss < best - 1e-12 * max(1.0, abs(best) if np.isfinite(best) else 1.0):
                best_c, best = c, loss
        raw[j] = best_c
    coeffs = np.clip(pool_adjacent_violators(raw), 0.0, 1.0)
    finite = Q[np.isfinite(Q)]
    cap = float(finite[-1]) if finite.size else np.inf
    return TruncationModel(forecast.levels, coeffs, cap)


def save_models(path, **models):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({k: v.to_dict() for k, v in models.items()}, fh)


def load_models(path):
    from hybridcast.gbqr import QuantileModelSet

    kinds = {"stacking": StackingCombiner, "truncation": TruncationModel}
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out = {}
    for name, d in raw.items():
        if "kind" in d:
            out[name] = kinds[d["kind"]].from_dict(d)
        else:
            out[name] = QuantileModelSet.from_dict(d)
    return out
