"""Histogram gradient-boosted regression trees with pinball or squared-error loss.

Trees are grown depth-wise on pre-binned features. Splits are chosen on
negative-gradient sums; leaf values are then re-fitted to the loss-optimal
constant of the residuals that landed in the leaf (mean for squared error,
empirical tau-quantile for pinball), shrunk by the L1/L2 penalties.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

FORMAT_TAG = "hybridcast-gbqr"
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    max_depth: int = 4
    num_leaves: int = 16
    min_data_in_leaf: int = 20
    num_estimators: int = 200
    lambda_l1: float = 0.0
    lambda_l2: float = 0.0
    histogram_bins: int = 256
    bagging_fraction: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        for name in ("max_depth", "num_leaves", "min_data_in_leaf", "num_estimators", "histogram_bins"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.histogram_bins > 65535:
            raise ValueError("histogram_bins must fit in 16 bits")
        if self.lambda_l1 < 0 or self.lambda_l2 < 0:
            raise ValueError("penalties must be non-negative")
        if not 0.0 < self.bagging_fraction <= 1.0:
            raise ValueError("bagging_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class Loss:
    kind: str
    tau: float = None

    def __post_init__(self):
        if self.kind == "pinball":
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ValueError("pinball loss needs tau in (0, 1)")
        elif self.kind == "mse":
            if self.tau is not None:
                raise ValueError("squared error takes no tau")
        else:
            raise ValueError(f"unknown loss {self.kind!r}")

    @classmethod
    def parse(cls, spec):
        if isinstance(spec, Loss):
            return spec
        spec = str(spec).strip().lower()
        if spec in ("mse", "squared_error", "l2"):
            return cls("mse")
        if spec.startswith("pinball:"):
            return cls("pinball", float(spec.split(":", 1)[1]))
        raise ValueError(f"cannot parse loss {spec!r}; expected 'mse' or 'pinball:<tau>'")

    def __str__(self):
        return "mse" if self.kind == "mse" else f"pinball:{self.tau!r}"

    def value(self, y, f):
        r = y - f
        if self.kind == "mse":
            return float(np.mean(r * r))
        return float(np.mean(np.where(r >= 0, self.tau * r, (self.tau - 1.0) * r)))

    def negative_gradient(self, y, f):
        if self.kind == "mse":
            return y - f
        return pinball_negative_gradient(y, f, self.tau)


def pinball_negative_gradient(y, f, tau):
    """``tau`` above the prediction, ``-(1 - tau)`` below, 0 at the kink."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    out = np.where(y > f, tau, np.where(y < f, tau - 1.0, 0.0))
    return out if out.ndim else float(out)


def empirical_quantile(x, tau):
    """Smallest sample value minimising the pinball loss at level ``tau``."""
    x = np.sort(np.asarray(x, dtype=float))
    k = max(int(np.ceil(tau * x.size - 1e-9)) - 1, 0)
    return float(x[k])


def _soft(s, l1):
    return np.sign(s) * np.maximum(np.abs(s) - l1, 0.0)


class Binner:
    """Equal-frequency thresholds per feature; bin ``b`` holds ``th[b-1] < x <= th[b]``."""

    def __init__(self, thresholds):
        self.thresholds = [np.asarray(t, dtype=float) for t in thresholds]

    @classmethod
    def fit(cls, X, max_bins):
        thresholds = []
        for col in np.asarray(X, dtype=float).T:
            xs = np.sort(col)
            n = xs.size
            ranks = np.unique(np.round(np.arange(1, max_bins) * n / max_bins).astype(int))
            ranks = ranks[(ranks >= 1) & (ranks < n)]
            left = xs[ranks - 1]
            nxt = np.searchsorted(xs, left, side="right")
            keep = nxt < n
            th = np.unique(0.5 * (left[keep] + xs[nxt[keep]]))
            thresholds.append(th)
        return cls(thresholds)

    @property
    def n_bins(self):
        return [t.size + 1 for t in self.thresholds]

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        codes = np.empty(X.shape, dtype=np.int32)
        for j, th in enumerate(self.thresholds):
            codes[:, j] = np.searchsorted(th, X[:, j], side="left")
        return codes


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self):
        return int(np.count_nonzero(self.feature < 0))

    @property
    def depth(self):
        depth = np.zeros(self.feature.size, dtype=int)
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not np.any(active):
                return node
            r = rows[active]
            n = node[active]
            go_left = X[r, feat[active]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(v) for v in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )


def _leaf_values(leaf_of_row, residuals, n_nodes, loss, cfg):
    counts = np.bincount(leaf_of_row, minlength=n_nodes).astype(float)
    if loss.kind == "mse":
        stat = np.bincount(leaf_of_row, weights=residuals, minlength=n_nodes)
    else:
        order = np.lexsort((residuals, leaf_of_row))
        sorted_res = residuals[order]
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        k = np.maximum(np.ceil(loss.tau * counts - 1e-9).astype(np.int64) - 1, 0)
        stat = np.zeros(n_nodes)
        has = counts > 0
        stat[has] = sorted_res[starts[has] + k[has]] * counts[has]
    values = np.zeros(n_nodes)
    has = counts > 0
    values[has] = _soft(stat[has], cfg.lambda_l1) / (counts[has] + cfg.lambda_l2)
    return values


def fit_tree(codes, gradients, cfg, binner=None, residuals=None, loss=None):
    """Grow one tree on binned features.

    ``gradients`` drive the split search; leaf values are the loss-optimal
    constant over ``residuals`` (defaults to the gradients, i.e. squared error).
    Returns ``(tree, leaf_of_row)``.
    """
    codes = np.asarray(codes)
    g = np.asarray(gradients, dtype=float)
    n, n_features = codes.shape
    if g.shape != (n,):
        raise ValueError("one gradient per row is required")
    loss = Loss("mse") if loss is None else loss
    residuals = g if residuals is None else np.asarray(residuals, dtype=float)
    n_bins = [int(codes[:, j].max()) + 1 if n else 1 for j in range(n_features)]
    if binner is not None:
        n_bins = binner.n_bins
    l1, l2 = cfg.lambda_l1, cfg.lambda_l2
    min_leaf = int(cfg.min_data_in_leaf)

    feature = [-1]
    split_bin = [0]
    left = [-1]
    right = [-1]
    leaf_of_row = np.zeros(n, dtype=np.int64)
    frontier = [0]
    n_leaves = 1

    NB = max(max(n_bins), 2)
    feat_offset = np.arange(n_features, dtype=np.int64)

    def score(G, C):
        S = G if l1 == 0 else _soft(G, l1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return S * S / (C + l2)

    for _ in range(int(cfg.max_depth)):
        if n_leaves >= cfg.num_leaves or not frontier:
            break
        node_counts = np.bincount(leaf_of_row, minlength=len(feature))
        cand = [v for v in frontier if node_counts[v] >= 2 * min_leaf]
        if not cand:
            break
        pos = np.full(len(feature), -1, dtype=np.int64)
        pos[cand] = np.arange(len(cand))
        row_pos = pos[leaf_of_row]
        mask = row_pos >= 0
        rp = row_pos[mask]
        A = len(cand)
        # one histogram over (feature, node, bin) for all features at once
        key = ((feat_offset[None, :] * A + rp[:, None]) * NB + codes[mask]).ravel()
        size = n_features * A * NB
        G = np.bincount(key, weights=np.repeat(g[mask], n_features), minlength=size).reshape(n_features, A, NB)
        C = np.bincount(key, minlength=size).reshape(n_features, A, NB).astype(float)
        GL = np.cumsum(G, axis=2)[:, :, :-1]
        CL = np.cumsum(C, axis=2)[:, :, :-1]
        Gt = G.sum(axis=2, keepdims=True)
        Ct = C.sum(axis=2, keepdims=True)
        GR = Gt - GL
        CR = Ct - CL
        gain = score(GL, CL) + score(GR, CR) - score(Gt, Ct)
        gain[(CL < min_leaf) | (CR < min_leaf)] = -np.inf
        # first feature, then first bin, wins ties
        flat = gain.transpose(1, 0, 2).reshape(A, -1)
        pick = np.argmax(flat, axis=1)
        best_gain = flat[np.arange(A), pick]
        best_feat = np.where(best_gain > 1e-12, pick // (NB - 1), -1)
        best_bin = pick % (NB - 1)

        order = [i for i in np.argsort(-best_gain, kind="stable") if best_feat[i] >= 0]
        budget = int(cfg.num_leaves) - n_leaves
        order = sorted(order[:budget])
        if not order:
            break
        new_frontier = []
        split_nodes = np.full(len(cand), False)
        for i in order:
            node = cand[i]
            li, ri = len(feature), len(feature) + 1
            feature.extend([-1, -1])
            split_bin.extend([0, 0])
            left.extend([-1, -1])
            right.extend([-1, -1])
            feature[node] = int(best_feat[i])
            split_bin[node] = int(best_bin[i])
            left[node] = li
            right[node] = ri
            new_frontier.extend([li, ri])
            split_nodes[i] = True
            n_leaves += 1
        feature_arr = np.asarray(feature)
        rows = np.flatnonzero(mask)
        moved = split_nodes[rp]
        rows = rows[moved]
        nodes = leaf_of_row[rows]
        f = feature_arr[nodes]
        go_left = codes[rows, f] <= np.asarray(split_bin)[nodes]
        leaf_of_row[rows] = np.where(go_left, np.asarray(left)[nodes], np.asarray(right)[nodes])
        frontier = new_frontier

    feature_arr = np.asarray(feature, dtype=np.int64)
    bins_arr = np.asarray(split_bin, dtype=np.int64)
    threshold = np.zeros(feature_arr.size)
    if binner is not None:
        internal = np.flatnonzero(feature_arr >= 0)
        for node in internal:
            threshold[node] = binner.thresholds[feature_arr[node]][bins_arr[node]]
    else:
        threshold = bins_arr.astype(float)
    values = _leaf_values(leaf_of_row, residuals, feature_arr.size, loss, cfg)
    values[feature_arr >= 0] = 0.0
    tree = Tree(feature_arr, threshold, np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64), values)
    return tree, leaf_of_row


@dataclass
class BoostedModel:
    loss: Loss
    learning_rate: float
    base_score: float
    feature_schema: list
    trees: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def predict(self, X):
        return predict(self, X)

    def to_dict(self):
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "loss": str(self.loss),
            "learning_rate": float(self.learning_rate),
            "base_score": float(self.base_score),
            "feature_schema": list(self.feature_schema),
            "config": self.config,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT_TAG:
            raise ValueError("not a boosted-model file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        return cls(
            Loss.parse(d["loss"]),
            float(d["learning_rate"]),
            float(d["base_score"]),
            list(d["feature_schema"]),
            [Tree.from_dict(t) for t in d["trees"]],
            dict(d.get("config", {})),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _as_matrix(X, schema=None):
    columns = getattr(X, "columns", None)
    if columns is not None and schema is not None and list(map(str, columns)) != list(schema):
        raise ValueError(f"feature schema mismatch: expected {list(schema)}, got {list(columns)}")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if schema is not None and X.shape[1] != len(schema):
        raise ValueError(f"feature schema mismatch: expected {len(schema)} columns, got {X.shape[1]}")
    return X


def fit_boosted(X, y, loss="mse", cfg=None, feature_names=None, trace=None):
    """Boost ``cfg.num_estimators`` trees from a constant base score.

    ``trace``, when a list, receives the training loss after every round.
    """
    cfg = TrainConfig() if cfg is None else cfg
    loss = Loss.parse(loss)
    if feature_names is None and hasattr(X, "columns"):
        feature_names = [str(c) for c in X.columns]
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("training data is empty or misaligned")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("unclean dataset: NaN or infinite values")
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(X.shape[1])]
    base = float(np.mean(y)) if loss.kind == "mse" else empirical_quantile(y, loss.tau)
    binner = Binner.fit(X, cfg.histogram_bins)
    codes = binner.transform(X)
    rng = np.random.default_rng(cfg.rng_seed)
    n = y.size
    f = np.full(n, base)
    trees = []
    eta = float(cfg.learning_rate)
    for _ in range(int(cfg.num_estimators)):
        if cfg.bagging_fraction < 1.0:
            rows = np.sort(rng.choice(n, size=max(1, int(cfg.bagging_fraction * n)), replace=False))
        else:
            rows = slice(None)
        grad = loss.negative_gradient(y[rows], f[rows])
        tree, leaves = fit_tree(codes[rows], grad, cfg, binner=binner, residuals=y[rows] - f[rows], loss=loss)
        trees.append(tree)
        if cfg.bagging_fraction < 1.0:
            leaves = tree.apply(X)
        f += eta * tree.value[leaves]
        if trace is not None:
            trace.append(loss.value(y, f))
    return BoostedModel(loss, eta, base, list(feature_names), trees, asdict(cfg))


def predict(model, X):
    """``base_score + learning_rate * sum(tree outputs)``."""
    X = _as_matrix(X, model.feature_schema)
    out = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        out += model.learning_rate * tree.predict(X)
    return out


def fit_mse_oriented(X, y, cfg=None, feature_names=None):
    """Squared-error booster used as the point forecaster for trading."""
    return fit_boosted(X, y, "mse", cfg, feature_names)


def _threads():
    try:
        return max(1, int(os.environ.get("HYBRIDCAST_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class QuantileModelSet:
    """One pinball booster per level, sharing a feature schema."""

    levels: np.ndarray
    models: list

    def predict(self, X, timestamps=None, rearrange=True):
        """Per-level predictions, sorted across levels unless ``rearrange`` is False."""
        from hybridcast.aggregate import QuantileForecast, rearrange_monotone

        values = np.column_stack([m.predict(X) for m in self.models])
        return QuantileForecast(self.levels, rearrange_monotone(values) if rearrange else values, timestamps)

    def to_dict(self):
        return {"levels": [float(t) for t in self.levels], "models": [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["levels"], dtype=float), [BoostedModel.from_dict(m) for m in d["models"]])


def fit_quantile_set(X, y, levels, cfg=None, feature_names=None, threads=None):
    """Train independent pinball models for every level; parallel over levels."""
    levels = np.asarray(levels, dtype=float)
    threads = _threads() if threads is None else threads

    def one(tau):
        return fit_boosted(X, y, Loss("pinball", float(tau)), cfg, feature_names)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = list(pool.map(one, levels))
    else:
        models = [one(t) for t in levels]
    return QuantileModelSet(levels, models)
