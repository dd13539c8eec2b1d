import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridcast.aggregate import QuantileForecast
from hybridcast.ensemble import (StackingCombiner, TruncationModel, apply_truncation, fit_stacking,
                                 fit_truncation, load_models, pool_adjacent_violators, predict_stacked,
                                 save_models)
from hybridcast.metrics import pinball

LEVELS = np.array([0.1, 0.5, 0.9])


def _fc(values, levels=LEVELS):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = np.repeat(values[:, None], len(levels), axis=1)
    return QuantileForecast(levels, values)


def _level_losses(y, fc, levels):
    return np.array([np.sum(pinball(y, fc.values[:, j], t)) for j, t in enumerate(levels)])


def test_perfect_bases_zero_loss():
    y = np.random.default_rng(0).uniform(0, 100, 200)
    comb = fit_stacking(_fc(y), _fc(y), y)
    out = predict_stacked(comb, _fc(y), _fc(y))
    assert np.max(_level_losses(y, out, LEVELS)) <= 1e-6


def test_symmetric_bias_cancels():
    y = np.random.default_rng(1).uniform(0, 100, 300)
    a, b = _fc(y + 5, [0.5]), _fc(y - 5, [0.5])
    comb = fit_stacking(a, b, y)
    loss = np.mean(pinball(y, predict_stacked(comb, a, b).values[:, 0], 0.5))
    assert loss <= 1e-3 * 100


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_stacking_never_worse_than_single_base(seed):
    rng = np.random.default_rng(seed)
    y = rng.gamma(2.0, 50.0, 150)
    a = _fc(np.column_stack([y * 0.8, y, y * 1.2]) + rng.normal(0, 10, (150, 3)))
    b = _fc(rng.uniform(0, 300, (150, 3)))
    comb = fit_stacking(a, b, y)
    fitted = _level_losses(y, predict_stacked(comb, a, b), LEVELS)
    assert np.all(fitted <= _level_losses(y, a, LEVELS) + 1e-6)
    assert np.all(fitted <= _level_losses(y, b, LEVELS) + 1e-6)


def test_stacking_matches_lp_oracle():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(2)
    y = rng.gamma(2.0, 50.0, 120)
    pa, pb = y + rng.normal(0, 20, 120), 0.5 * y + rng.normal(0, 5, 120)
    comb = fit_stacking(_fc(pa, [0.7]), _fc(pb, [0.7]), y)
    w = cp.Variable(3)
    r = y - (w[0] * pa + w[1] * pb + w[2])
    oracle = cp.Problem(cp.Minimize(cp.sum(cp.maximum(0.7 * r, -0.3 * r)))).solve(solver="CLARABEL")
    ours = np.sum(pinball(y, comb.weights[0, 0] * pa + comb.weights[0, 1] * pb + comb.weights[0, 2], 0.7))
    assert ours == pytest.approx(oracle, rel=1e-6)


def test_stacking_errors_and_fallback():
    with pytest.raises(ValueError):
        fit_stacking(_fc(np.ones(3)), _fc(np.ones(3)), np.ones(4))
    comb = StackingCombiner(LEVELS, np.tile([0.5, 0.5, 0.0], (3, 1)))
    out = predict_stacked(comb, _fc([10.0, np.nan]), _fc([20.0, 8.0]))
    np.testing.assert_allclose(out.values[0], 15.0)
    np.testing.assert_allclose(out.values[1], 8.0)


def test_predict_stacked_affine_examples():
    a, b = _fc([3.0, 4.0]), _fc([7.0, 9.0])
    ident = StackingCombiner(LEVELS, np.tile([1.0, 0.0, 0.0], (3, 1)))
    np.testing.assert_array_equal(predict_stacked(ident, a, b).values, a.values)
    const = StackingCombiner(LEVELS, np.tile([0.0, 0.0, 42.0], (3, 1)))
    assert np.all(predict_stacked(const, a, b).values == 42.0)


def test_apply_truncation_examples():
    model = TruncationModel([0.5], [0.95], 500.0)
    assert apply_truncation(_fc([600.0], [0.5]), model).values[0, 0] == pytest.approx(475.0)
    assert apply_truncation(_fc([100.0], [0.5]), model).values[0, 0] == 100.0
    free = TruncationModel([0.5], [0.95])
    assert apply_truncation(_fc([1e6], [0.5]), free).values[0, 0] == 1e6


@given(st.lists(st.floats(0, 1000), min_size=3, max_size=3),
       st.lists(st.floats(0.9, 1.0), min_size=3, max_size=3), st.floats(1, 1000))
def test_truncation_idempotent_and_monotone(raw, coeffs, cap):
    model = TruncationModel(LEVELS, np.sort(coeffs), cap)
    fc = _fc(np.sort(raw)[None, :])
    once = apply_truncation(fc, model)
    np.testing.assert_array_equal(apply_truncation(once, model).values, once.values)
    assert np.all(np.diff(once.values) >= 0)
    assert np.all(once.values <= max(coeffs) * cap)


def test_pav_example():
    np.testing.assert_allclose(pool_adjacent_violators([0.95, 0.92, 0.97]), [0.935, 0.935, 0.97])


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_pav_is_monotone_and_mean_preserving(values):
    out = pool_adjacent_violators(values)
    assert np.all(np.diff(out) >= -1e-12)
    assert np.sum(out) == pytest.approx(np.sum(values), abs=1e-9)


def test_fit_truncation_inactive_and_active():
    rng = np.random.default_rng(3)
    y = rng.uniform(0, 200, 300)
    fc = _fc(np.column_stack([y * 0.9, y, y * 1.1]))
    assert np.all(fit_truncation(y, fc, 1000.0).coefficients == 1.0)
    Q = 500.0
    y_cap = np.full(300, 0.93 * Q)
    fc_hi = _fc(np.column_stack([np.full(300, 0.5 * Q), np.full(300, Q), np.full(300, Q)]))
    model = fit_truncation(y_cap, fc_hi, Q)
    # raw optima {1.0, 0.93, 0.93} pool to their mean under the monotone constraint
    np.testing.assert_allclose(model.coefficients, (1.0 + 0.93 + 0.93) / 3)
    all_high = fit_truncation(y_cap, _fc(np.full(300, Q)), Q)
    np.testing.assert_allclose(all_high.coefficients, 0.93)
    assert np.all(np.diff(model.coefficients) >= 0)
    with pytest.raises(ValueError):
        fit_truncation([], _fc(np.zeros((0, 3))), Q)


def test_model_round_trip(tmp_path):
    comb = StackingCombiner(LEVELS, np.arange(9.0).reshape(3, 3))
    trunc = TruncationModel(LEVELS, [0.9, 0.95, 1.0], 600.0)
    save_models(tmp_path / "m.json", stacking=comb, truncation=trunc)
    loaded = load_models(tmp_path / "m.json")
    np.testing.assert_array_equal(loaded["stacking"].weights, comb.weights)
    np.testing.assert_array_equal(loaded["truncation"].coefficients, trunc.coefficients)
    assert loaded["truncation"].capacity == 600.0
