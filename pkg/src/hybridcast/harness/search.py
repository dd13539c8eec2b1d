"""Random hyperparameter search with chronological three-fold cross-validation."""

import dataclasses
import logging

import numpy as np
import pandas as pd

from hybridcast.gbqr import TrainConfig, fit_boosted
from hybridcast.metrics import pinball

log = logging.getLogger(__name__)

# Candidate values per hyperparameter: the full tuning ranges and steps
SEARCH_SPACE = {
    "learning_rate": ("uniform", 0.01, 0.3),
    "max_depth": ("choice", list(range(3, 13))),
    "num_leaves": ("choice", list(range(100, 1001, 100))),
    "min_data_in_leaf": ("choice", list(range(200, 10001, 100))),
    "num_estimators": ("choice", [500, 1000, 2000]),
    "lambda_l1": ("choice", list(range(0, 101, 10))),
    "lambda_l2": ("choice", list(range(0, 101, 10))),
}

TEST_LEAD_RANGE = (23.0, 47.0)
TEST_REFERENCE_HOUR = 0


def sample_config(rng, space=None, base=None):
    space = SEARCH_SPACE if space is None else space
    values = {}
    for name, spec in space.items():
        if spec[0] == "uniform":
            values[name] = float(rng.uniform(spec[1], spec[2]))
        elif spec[0] == "choice":
            values[name] = spec[1][int(rng.integers(len(spec[1])))]
        else:
            raise ValueError(f"unknown sampler {spec[0]!r} for {name}")
    base = TrainConfig() if base is None else base
    return dataclasses.replace(base, **values)


def _epoch_ns(timestamps):
    return pd.DatetimeIndex(pd.to_datetime(timestamps, utc=True)).asi8


def chronological_folds(timestamps, folds=3):
    """Contiguous time blocks as boolean masks, earliest first."""
    ts = _epoch_ns(timestamps)
    edges = np.quantile(ts, np.linspace(0.0, 1.0, folds + 1))
    masks = []
    for k in range(folds):
        upper = ts <= edges[k + 1] if k == folds - 1 else ts < edges[k + 1]
        masks.append((ts >= edges[k]) & upper)
    return masks, edges


def test_rows(dataset):
    """Rows usable for testing: leads 23-47 h from the 00:00 reference run."""
    if dataset.meta is None:
        return np.ones(len(dataset), dtype=bool)
    lead = dataset.meta["lead_hours"].to_numpy()
    hour = dataset.meta["reference_time"].dt.hour.to_numpy()
    return (lead >= TEST_LEAD_RANGE[0]) & (lead <= TEST_LEAD_RANGE[1]) & (hour == TEST_REFERENCE_HOUR)


def cv_score(cfg, train, test=None, folds=3, tau=0.5):
    """Mean held-out pinball at ``tau`` over chronological folds.

    ``train`` supplies training rows from the other folds; ``test`` (same
    feature schema, e.g. built with the day-ahead lead window) supplies the
    held-out rows, restricted to day-ahead leads from the 00:00 run.
    """
    test = train if test is None else test
    test_ok = test_rows(test)
    t_train = _epoch_ns(train.timestamps)
    t_test = _epoch_ns(test.timestamps)
    _, edges = chronological_folds(np.concatenate([t_train, t_test]).astype("datetime64[ns]"), folds)
    scores = []
    for k in range(folds):
        hi = edges[k + 1]
        in_block = lambda t: (t >= edges[k]) & ((t <= hi) if k == folds - 1 else (t < hi))  # noqa: E731
        tr = ~in_block(t_train)
        te = in_block(t_test) & test_ok
        if not tr.any() or not te.any():
            continue
        model = fit_boosted(train.X.to_numpy()[tr], train.y[tr], f"pinball:{tau}", cfg, train.columns)
        pred = model.predict(test.X.to_numpy()[te])
        scores.append(float(np.mean(pinball(test.y[te], pred, tau))))
    if not scores:
        raise ValueError("no fold has both training and test rows")
    return float(np.mean(scores))


def random_search(train, budget, test=None, seed=0, folds=3, space=None, base=None, tau=0.5):
    """Sample ``budget`` configurations, score each by CV pinball, return (best, trials)."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(seed)
    trials = []
    for i in range(int(budget)):
        cfg = sample_config(rng, space, base)
        score = cv_score(cfg, train, test, folds, tau)
        log.info("trial %d score %.4f", i, score)
        trials.append((score, cfg))
    best = min(range(len(trials)), key=lambda i: trials[i][0])
    return trials[best][1], trials
