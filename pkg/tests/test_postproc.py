import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridcast.aggregate import QuantileForecast
from hybridcast.postproc import (OnlineWindow, PostProcessModel, apply_poly, fit_lasso_qr, fit_window,
                                 lambda_grid, lasso_qr_objective, rolling_update, select_lambda)
from hybridcast.qreg import quantile_regression

GROWTH = 2741 / 2609


def _window(forecast, actual, start="2024-01-01", levels=(0.5,)):
    ts = pd.date_range(start, periods=len(actual), freq="30min", tz="UTC")
    return OnlineWindow(ts, np.asarray(forecast).reshape(len(actual), -1), actual, np.asarray(levels))


def test_apply_poly_examples():
    fc = QuantileForecast([0.5], [[100.0], [0.0]])
    ident = PostProcessModel.identity([0.5])
    assert apply_poly(ident, fc).values[0, 0] == 100.0
    scaled = PostProcessModel([0.5], [[1.05, 0.0, 0.0]], [0.0])
    assert apply_poly(scaled, fc).values[0, 0] == pytest.approx(105.0)
    wild = PostProcessModel([0.5], [[3.0, -2.0, 0.7]], [0.0])
    assert apply_poly(wild, fc).values[1, 0] == 0.0


@given(st.lists(st.floats(-5, 5), min_size=9, max_size=9), st.lists(st.floats(0, 800), min_size=3, max_size=3))
def test_apply_poly_monotone_and_clamped(coefs, values):
    model = PostProcessModel([0.1, 0.5, 0.9], np.reshape(coefs, (3, 3)) * [1, 1e-3, 1e-6], [0.0] * 3, capacity=700.0)
    out = apply_poly(model, QuantileForecast([0.1, 0.5, 0.9], [values])).values
    assert np.all(np.diff(out) >= 0)
    assert np.all((out >= 0) & (out <= 700))


def test_recovers_capacity_growth():
    f = np.random.default_rng(0).uniform(0, 2600, 500)
    b = fit_lasso_qr(f, GROWTH * f, 0.5, 1e-9)
    assert b[0] == pytest.approx(GROWTH, abs=1e-3)
    assert abs(b[1]) * 2600 < 1e-3 and abs(b[2]) * 2600 ** 2 < 1e-3


def test_identity_and_large_penalty():
    f = np.random.default_rng(1).uniform(0, 500, 200)
    b = fit_lasso_qr(f, f, 0.3, 0.0)
    assert lasso_qr_objective(f, f, 0.3, 0.0, b) <= 1e-8
    np.testing.assert_allclose(fit_lasso_qr(f, f, 0.3, 1e6), 0.0, atol=1e-12)
    with pytest.raises(ValueError, match="window too small"):
        fit_lasso_qr(f[:5], f[:5], 0.5, 0.1)


def test_lasso_matches_convex_oracle():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(2)
    f = rng.uniform(0, 400, 300)
    y = np.maximum(1.1 * f - 2e-4 * f ** 2 + rng.normal(0, 20, 300), 0)
    tau, lam = 0.8, 0.002
    m = f.max()
    X = np.column_stack([f / m, (f / m) ** 2, (f / m) ** 3])
    b = cp.Variable(3)
    r = y / m - X @ b
    obj = cp.sum(cp.maximum(tau * r, (tau - 1) * r)) / f.size + lam * cp.norm1(b)
    oracle = cp.Problem(cp.Minimize(obj)).solve(solver="CLARABEL")
    ours = lasso_qr_objective(f, y, tau, lam, fit_lasso_qr(f, y, tau, lam))
    assert ours == pytest.approx(oracle, rel=1e-6, abs=1e-8)


def test_cubic_generator_recovered():
    rng = np.random.default_rng(3)
    f = rng.uniform(0, 1, 2000)
    true = np.array([0.8, 0.6, -0.3])
    y = true[0] * f + true[1] * f ** 2 + true[2] * f ** 3 + rng.laplace(0, 0.01, 2000)
    b = fit_lasso_qr(f, y, 0.5, 0.0)
    np.testing.assert_allclose(b, true, rtol=0.05)


def test_quantile_regression_penalty_validation():
    with pytest.raises(ValueError):
        quantile_regression(np.ones((3, 1)), np.ones(3), 0.5, -1.0)
    with pytest.raises(ValueError):
        quantile_regression(np.ones((3, 1)), np.ones(3), 1.0)


def test_select_lambda_ties_and_noiseless():
    f = np.random.default_rng(4).uniform(1, 500, 200)
    lam, b = select_lambda(f, GROWTH * f, 0.5)
    assert lam == lambda_grid(GROWTH * f, f).min()
    # constant-zero actuals: every penalty fits zeros equally well
    lam0, _ = select_lambda(f, np.zeros(200), 0.5, grid=[5.0, 1.0, 3.0])
    assert lam0 == 1.0
    with pytest.raises(ValueError):
        select_lambda(f[:12], f[:12], 0.5)


def test_select_lambda_is_exact_argmin():
    rng = np.random.default_rng(5)
    f = rng.uniform(0, 100, 150)
    y = np.maximum(f + rng.normal(0, 30, 150), 0)
    grid = lambda_grid(y, f)
    lam, _ = select_lambda(f, y, 0.5, grid)
    losses = []
    for g in grid:
        b = fit_lasso_qr(f[:90], y[:90], 0.5, g)
        pred = b[0] * f[90:] + b[1] * f[90:] ** 2 + b[2] * f[90:] ** 3
        losses.append(np.mean(np.where(y[90:] >= pred, 0.5, 0.5) * np.abs(y[90:] - pred)))
    assert min(losses) == losses[list(grid).index(lam)]


def test_pure_noise_prefers_shrinkage():
    # zero-median noise: the best no-intercept cubic is identically zero
    shrunk = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        f = rng.uniform(0, 100, 200)
        y = rng.uniform(-1, 1, 200)
        lam, _ = select_lambda(f, y, 0.5)
        shrunk += lam > lambda_grid(y, f).min()
    assert shrunk >= 12


def test_window_validation_and_cap():
    with pytest.raises(ValueError):
        _window([1.0, 2.0], [1.0, -1.0])
    w = _window(np.ones(48 * 10), np.ones(48 * 10))
    new = _window(np.ones(48), np.ones(48), start="2024-01-11")
    merged = w.append(new, max_days=5)
    assert len(merged) == 48 * 5
    with pytest.raises(ValueError):
        merged.append(new)


def test_rolling_update_improves_shifted_day():
    rng = np.random.default_rng(7)
    levels = (0.1, 0.5, 0.9)
    n = 48 * 11
    base = np.clip(300 * np.sin(np.linspace(0, 11 * 2 * np.pi, n)), 0, None)
    actual = GROWTH * 1.05 * base * rng.uniform(0.9, 1.1, n)
    fc = base[:, None] * np.array([0.9, 1.0, 1.1])
    model = PostProcessModel.identity(levels)
    window = _window(fc[:48], actual[:48], levels=levels)
    same, _ = rolling_update(model, window, None)
    assert same is model
    for d in range(1, 10):
        day = _window(fc[48 * d:48 * (d + 1)], actual[48 * d:48 * (d + 1)],
                      start=pd.Timestamp("2024-01-01") + pd.Timedelta(days=d), levels=levels)
        model, window = rolling_update(model, window, day)
    test = slice(48 * 10, n)
    raw = QuantileForecast(levels, fc[test])
    from hybridcast.metrics import mpl
    assert mpl(actual[test], apply_poly(model, raw).values, levels) < mpl(actual[test], raw.values, levels)


def test_model_round_trip(tmp_path):
    model = PostProcessModel([0.1, 0.9], [[1, 0, 0], [1.1, 1e-3, 0]], [0.1, 0.2], 100, 700.0)
    model.save(tmp_path / "p.json")
    again = PostProcessModel.load(tmp_path / "p.json")
    np.testing.assert_array_equal(again.coefficients, model.coefficients)
    assert again.capacity == 700.0 and again.fitted_on == 100
    w = _window(np.c_[np.ones(30), 2 * np.ones(30)], np.ones(30), levels=(0.1, 0.9))
    assert fit_window(w).coefficients.shape == (2, 3)
