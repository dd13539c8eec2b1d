"""Decision-focused spread predictor trained on the realised trading loss.

A one-hidden-layer network maps (power forecast, one-hot period of day) to a
spread estimate. Two training objectives share the architecture:

* ``accuracy``: mean squared spread error (the accuracy-oriented benchmark);
* ``trading``: mean revenue gap of the resulting KKT bids to the
  perfect-information bid, plus a hinge penalty keeping the spread MSE
  within a tolerance.

Power forecasts are frozen inputs; only the spread head is trained.
"""

from dataclasses import dataclass, field

import numpy as np

from hybridcast.trading.strategy import (
    BID_MAX,
    BID_MIN,
    BID_SLOPE,
    IMBALANCE_PENALTY,
    PERIODS_PER_DAY,
    SPREAD_WEIGHT,
    optimal_bid,
    trading_loss_direct,
)


TRAIN_DEFAULTS = {"learning_rate": 0.05}


class TrainingDiverged(RuntimeError):
    """Raised when the loss turns non-finite; ``model`` holds the last stable state."""

    def __init__(self, message, model):
        super().__init__(message)
        self.model = model


@dataclass
class ErrorShapingModel:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    power_scale: float
    spread_scale: float
    history: list = field(default_factory=list)

    @classmethod
    def init(cls, hidden=32, power_scale=1.0, spread_scale=1.0, seed=0):
        rng = np.random.default_rng(seed)
        n_in = 1 + PERIODS_PER_DAY
        W1 = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, hidden))
        w2 = rng.normal(0.0, 1.0 / np.sqrt(max(hidden, 1)), size=hidden)
        return cls(W1, np.zeros(hidden), w2, 0.0, float(power_scale), float(spread_scale))

    @classmethod
    def zero(cls, hidden=32, power_scale=1.0, spread_scale=1.0):
        n_in = 1 + PERIODS_PER_DAY
        return cls(np.zeros((n_in, hidden)), np.zeros(hidden), np.zeros(hidden), 0.0,
                   float(power_scale), float(spread_scale))

    def features(self, power, periods):
        power = np.asarray(power, dtype=float)
        X = np.zeros((power.size, 1 + PERIODS_PER_DAY))
        X[:, 0] = power / self.power_scale
        X[np.arange(power.size), np.asarray(periods, dtype=int)] = 1.0
        return X

    def _forward(self, X):
        H = np.tanh(X @ self.W1 + self.b1)
        return H, H @ self.w2 + self.b2

    def predict(self, power, periods):
        """Spread estimate in price units."""
        _, out = self._forward(self.features(power, periods))
        return out * self.spread_scale

    def copy(self):
        return ErrorShapingModel(self.W1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2),
                                 self.power_scale, self.spread_scale, list(self.history))

    def to_dict(self):
        return {"W1": self.W1.tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(), "b2": float(self.b2),
                "power_scale": self.power_scale, "spread_scale": self.spread_scale}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["W1"]), np.asarray(d["b1"]), np.asarray(d["w2"]), float(d["b2"]),
                   float(d["power_scale"]), float(d["spread_scale"]))


def _output_grad(objective, out, power, actual, spread, scale, mu, eps):
    """Loss and its gradient w.r.t. the normalised network output for one batch."""
    n = out.size
    target = spread / scale
    err = out - target
    mse = float(np.mean(err ** 2))
    if objective == "accuracy":
        return mse, 2.0 * err / n
    spread_hat = out * scale
    raw = power + BID_SLOPE * spread_hat
    bid = np.clip(raw, BID_MIN, BID_MAX)
    norm = SPREAD_WEIGHT * scale ** 2
    loss = trading_loss_direct(power, actual, spread_hat, spread) / norm
    # d(loss)/d(bid) = -(spread + 0.14*(y - bid)); zero where the bid is clipped
    d_bid = -(spread + 2.0 * IMBALANCE_PENALTY * (actual - bid))
    interior = (raw > BID_MIN) & (raw < BID_MAX)
    grad = np.where(interior, d_bid * BID_SLOPE * scale, 0.0) / norm / n
    total = float(np.mean(loss))
    if mu > 0 and mse > eps:
        total += mu * (mse - eps)
        grad = grad + mu * 2.0 * err / n
    return total, grad


def train_spread_model(power, periods, actual, spread, objective="trading", hidden=32, epochs=200,
                       batch_size=256, learning_rate=TRAIN_DEFAULTS["learning_rate"], mu=10.0,
                       mse_tolerance=None, seed=0, init=None):
    """Mini-batch gradient descent on the chosen objective.

    ``mse_tolerance`` is the allowed spread MSE in price units squared; the
    hinge penalty weight is ``mu``.
    """
    power = np.asarray(power, dtype=float)
    actual = np.asarray(actual, dtype=float)
    spread = np.asarray(spread, dtype=float)
    periods = np.asarray(periods, dtype=int)
    if objective not in ("trading", "accuracy"):
        raise ValueError(f"unknown objective {objective!r}")
    if not (power.size == actual.size == spread.size == periods.size) or power.size == 0:
        raise ValueError("training arrays are empty or misaligned")
    power_scale = max(float(np.std(power)), 1e-9)
    spread_scale = max(float(np.std(spread)), 1e-9)
    model = init.copy() if init is not None else ErrorShapingModel.init(hidden, power_scale, spread_scale, seed)
    eps = np.inf if mse_tolerance is None else float(mse_tolerance) / model.spread_scale ** 2
    X = model.features(power, periods)
    rng = np.random.default_rng(seed)
    stable = model.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        return _descend(model, stable, X, objective, power, actual, spread, epochs, batch_size, learning_rate,
                        mu, eps, rng)


def _descend(model, stable, X, objective, power, actual, spread, epochs, batch_size, learning_rate, mu, eps, rng):
    n = power.size
    for epoch in range(int(epochs)):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            H, out = model._forward(X[idx])
            loss, g = _output_grad(objective, out, power[idx], actual[idx], spread[idx],
                                   model.spread_scale, mu if np.isfinite(eps) else 0.0, eps)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}", stable)
            gw2 = H.T @ g
            gb2 = float(np.sum(g))
            gH = np.outer(g, model.w2) * (1.0 - H ** 2)
            gW1 = X[idx].T @ gH
            gb1 = gH.sum(axis=0)
            model.W1 -= learning_rate * gW1
            model.b1 -= learning_rate * gb1
            model.w2 -= learning_rate * gw2
            model.b2 -= learning_rate * gb2
            epoch_loss += loss * idx.size
        if not all(np.all(np.isfinite(p)) for p in (model.W1, model.b1, model.w2, [model.b2])):
            raise TrainingDiverged(f"parameters became non-finite at epoch {epoch}", stable)
        model.history.append(epoch_loss / n)
        stable = model.copy()
    return model


def train_error_shaping(power, periods, actual, spread, mu=10.0, epsilon=None, accuracy_model=None,
                        validation_fraction=0.25, hidden=32, epochs=200, seed=0, **kw):
    """Train the trading-loss spread model.

    Unless ``epsilon`` is given, the spread-MSE tolerance is 1.5x the
    validation MSE of an accuracy-oriented model with the same architecture
    (trained here if not supplied). Returns ``(e2e_model, accuracy_model)``.
    """
    power = np.asarray(power, dtype=float)
    actual = np.asarray(actual, dtype=float)
    spread = np.asarray(spread, dtype=float)
    periods = np.asarray(periods, dtype=int)
    n = power.size
    if accuracy_model is None:
        accuracy_model = train_spread_model(power, periods, actual, spread, "accuracy", hidden, epochs, seed=seed, **kw)
    if epsilon is None:
        cut = int(round((1.0 - validation_fraction) * n))
        check = accuracy_model if cut >= n else train_spread_model(
            power[:cut], periods[:cut], actual[:cut], spread[:cut], "accuracy", hidden, epochs, seed=seed, **kw)
        val = slice(cut, n) if cut < n else slice(0, n)
        pred = check.predict(power[val], periods[val])
        epsilon = 1.5 * float(np.mean((pred - spread[val]) ** 2))
    # the hinge multiplies the curvature by up to 1 + mu; shrink the step to match
    lr = kw.pop("learning_rate", TRAIN_DEFAULTS["learning_rate"]) / (1.0 + mu)
    model = train_spread_model(power, periods, actual, spread, "trading", hidden, epochs, mu=mu,
                               mse_tolerance=epsilon, seed=seed, init=accuracy_model, learning_rate=lr, **kw)
    return model, accuracy_model


def evaluate_spread_model(model, power, periods, actual, spread):
    """Mean trading loss, spread MSE and the per-period error pairs."""
    power = np.asarray(power, dtype=float)
    spread = np.asarray(spread, dtype=float)
    actual = np.asarray(actual, dtype=float)
    spread_hat = model.predict(power, periods)
    loss = trading_loss_direct(power, actual, spread_hat, spread)
    return {
        "mean_loss": float(np.mean(loss)),
        "spread_mse": float(np.mean((spread_hat - spread) ** 2)),
        "power_error": power - actual,
        "spread_error": spread_hat - spread,
        "loss": np.asarray(loss, dtype=float),
        "bids": optimal_bid(power, spread_hat),
    }
