"""Residual-independence check between wind and solar.

Both targets are regressed on their own features; if the held-out residuals
of the two additive-noise models are independent, the targets are
conditionally independent given the features, which justifies convolving
their forecast distributions.
"""

from dataclasses import dataclass

import numpy as np

from hybridcast.gbqr import TrainConfig, fit_boosted

MIN_SAMPLES = 500


@dataclass
class ResidualPair:
    eps_w: np.ndarray
    eps_s: np.ndarray
    timestamps: np.ndarray = None

    def __post_init__(self):
        self.eps_w = np.asarray(self.eps_w, dtype=float)
        self.eps_s = np.asarray(self.eps_s, dtype=float)
        if self.eps_w.shape != self.eps_s.shape:
            raise ValueError("residual series have different lengths")
        if not (np.all(np.isfinite(self.eps_w)) and np.all(np.isfinite(self.eps_s))):
            raise ValueError("residuals must be finite")


def held_out_residuals(X, y, cfg=None, folds=3):
    """Residuals from chronological k-fold squared-error boosting."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    edges = np.linspace(0, y.size, folds + 1).astype(int)
    for k in range(folds):
        test = np.arange(edges[k], edges[k + 1])
        train = np.setdiff1d(np.arange(y.size), test)
        model = fit_boosted(X[train], y[train], "mse", cfg)
        out[test] = y[test] - model.predict(X[test])
    return out


def fit_anm_residuals(wind_X, wind_y, solar_X, solar_y, cfg=None, folds=3, timestamps=None):
    if len(wind_y) != len(solar_y):
        raise ValueError("wind and solar data are not aligned")
    cfg = TrainConfig(num_estimators=100, min_data_in_leaf=50) if cfg is None else cfg
    return ResidualPair(held_out_residuals(wind_X, wind_y, cfg, folds),
                        held_out_residuals(solar_X, solar_y, cfg, folds), timestamps)


def equal_frequency_codes(x, bins):
    """Bin index per sample with (near) equal counts per bin, by rank."""
    x = np.asarray(x, dtype=float)
    ranks = np.argsort(np.argsort(x, kind="stable"), kind="stable")
    return (ranks * bins // x.size).astype(np.int64)


def mutual_information(pair, bins=30):
    """Plug-in mutual information (nats) on an equal-frequency ``bins x bins`` grid."""
    n = pair.eps_w.size
    if n < MIN_SAMPLES:
        raise ValueError(f"too few samples for mutual information: {n} < {MIN_SAMPLES}")
    return _mi_codes(equal_frequency_codes(pair.eps_w, bins), equal_frequency_codes(pair.eps_s, bins), bins)


def _mi_codes(a, b, bins):
    joint = np.bincount(a * bins + b, minlength=bins * bins).reshape(bins, bins) / a.size
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / (pa @ pb)[nz])))
    return max(mi, 0.0)


def independence_report(pair, bins=30, permutations=200, seed=0, alpha=0.05):
    """Permutation test of the observed MI against shuffles of the solar residuals."""
    n = pair.eps_w.size
    if n < MIN_SAMPLES:
        raise ValueError(f"too few samples for mutual information: {n} < {MIN_SAMPLES}")
    a = equal_frequency_codes(pair.eps_w, bins)
    b = equal_frequency_codes(pair.eps_s, bins)
    observed = _mi_codes(a, b, bins)
    report = {"mi": observed, "bins": bins, "permutations": int(permutations), "p_value": None, "verdict": None}
    if permutations <= 0:
        return report
    rng = np.random.default_rng(seed)
    null = np.array([_mi_codes(a, rng.permutation(b), bins) for _ in range(int(permutations))])
    p = (1 + np.count_nonzero(null >= observed)) / (1 + permutations)
    report.update(p_value=float(p), null_mean=float(null.mean()),
                  verdict="independent" if p > alpha else "dependent")
    return report
