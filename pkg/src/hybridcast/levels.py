"""Quantile level sets used throughout the pipeline."""

import numpy as np

# 0.001, 0.01..0.99, 0.999 (101 levels)
DENSE_LEVELS = np.round(np.concatenate([[0.001], np.arange(1, 100) / 100.0, [0.999]]), 6)

# 0.001, 0.05..0.95, 0.999 (21 levels) for fast runs
DESK_LEVELS = np.round(np.concatenate([[0.001], np.arange(1, 20) * 0.05, [0.999]]), 6)

# q10..q90, the submission levels
TARGET_LEVELS = np.round(np.arange(1, 10) / 10.0, 6)


def level_set(name):
    """Resolve a level-set name (``dense``, ``desk``, ``target``) or a ``lo..hi`` range."""
    name = str(name).strip()
    if name == "dense":
        return DENSE_LEVELS.copy()
    if name == "desk":
        return DESK_LEVELS.copy()
    if name in ("target", "0.1..0.9"):
        return TARGET_LEVELS.copy()
    if "," in name:
        levels = np.array([float(v) for v in name.split(",")])
        if np.any(levels <= 0) or np.any(levels >= 1) or np.any(np.diff(levels) <= 0):
            raise ValueError(f"invalid level list {name!r}")
        return levels
    raise ValueError(f"unknown level set {name!r}")


def level_column(tau):
    """CSV column name for a level, e.g. 0.1 -> 'q0.1', 0.001 -> 'q0.001'."""
    return "q" + format(float(tau), ".6f").rstrip("0").rstrip(".")
