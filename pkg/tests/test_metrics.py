import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridcast.aggregate import DiscreteDistribution, cdf_from_pdf
from hybridcast.metrics import (IntervalForecast, crps, empirical_coverage, mcrps, mpl, mws,
                                mws_from_quantiles, pinball, winkler)

finite = st.floats(-1e4, 1e4, allow_nan=False)
levels_st = st.floats(0.01, 0.99)


def _dist_from_density(start, delta, density):
    density = np.asarray(density, dtype=float)
    density = density / (density.sum() * delta)
    return cdf_from_pdf(DiscreteDistribution(start, delta, density, None))


def _point_mass(x, delta=0.01, start=0.0, size=2001):
    density = np.zeros(size)
    density[int(round((x - start) / delta))] = 1.0
    return _dist_from_density(start, delta, density)


def test_pinball_examples():
    assert pinball(5.0, 5.0, 0.3) == 0.0
    assert pinball(10.0, 8.0, 0.5) == pytest.approx(1.0)
    assert pinball(10.0, 12.0, 0.9) == pytest.approx(0.2)


def test_pinball_rejects_bad_level():
    with pytest.raises(ValueError):
        pinball(1.0, 2.0, 1.0)


@given(finite, finite, levels_st)
def test_pinball_nonnegative_and_zero_only_at_truth(y, yhat, tau):
    loss = pinball(y, yhat, tau)
    assert loss >= 0
    assert (loss == 0) == (y == yhat)


def test_mpl_examples():
    assert mpl([3.0, 4.0], [[3.0], [4.0]], [0.5]) == 0.0
    assert mpl([10.0], [[8.0]], [0.5]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mpl([1.0, 2.0], [[1.0]], [0.5])


@given(st.integers(0, 2**31 - 1))
def test_mpl_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=20)
    levels = np.array([0.1, 0.5, 0.9])
    q = rng.normal(size=(20, 3))
    perm = rng.permutation(20)
    lev_perm = rng.permutation(3)
    base = mpl(y, q, levels)
    assert mpl(y[perm], q[perm], levels) == pytest.approx(base, rel=1e-12)
    assert mpl(y, q[:, lev_perm], levels[lev_perm]) == pytest.approx(base, rel=1e-12)


def test_crps_point_mass_examples():
    assert crps(_point_mass(5.0), 5.0) == pytest.approx(0.0, abs=0.02)
    assert crps(_point_mass(5.0), 8.0) == pytest.approx(3.0, abs=0.02)


def test_crps_uniform():
    delta = 0.001
    dist = _dist_from_density(0.0, delta, np.r_[0.0, np.ones(1000)])
    assert crps(dist, 0.0) == pytest.approx(1 / 3, abs=2 * delta)


def test_mcrps_is_mean():
    a, b = _point_mass(2.0), _point_mass(4.0)
    assert mcrps([a, b], [2.0, 5.0]) == pytest.approx((crps(a, 2.0) + crps(b, 5.0)) / 2)


def test_winkler_examples():
    assert winkler(10, 20, 15, 0.2) == pytest.approx(10)
    assert winkler(10, 20, 5, 0.2) == pytest.approx(60)
    assert winkler(10, 20, 25, 0.2) == pytest.approx(60)
    with pytest.raises(ValueError):
        winkler(20, 10, 15)
    with pytest.raises(ValueError):
        IntervalForecast(2.0, 1.0)


@given(finite, st.floats(0, 1e3), finite, st.floats(0.01, 0.99))
def test_winkler_at_least_width(lo, width, y, alpha):
    assert winkler(lo, lo + width, y, alpha) >= width - 1e-9


def test_mws_examples():
    assert mws([0, 10], [4, 12], [1, 11]) == pytest.approx(3.0)
    assert mws([10], [20], [5]) == pytest.approx(60)
    lo, hi, y = np.array([0, 1, 2.0]), np.array([3, 2, 5.0]), np.array([-1, 1.5, 9.0])
    perm = [2, 0, 1]
    assert mws(lo[perm], hi[perm], y[perm]) == pytest.approx(mws(lo, hi, y))
    q = np.column_stack([lo, (lo + hi) / 2, hi])
    assert mws_from_quantiles(q, [0.1, 0.5, 0.9], y) == pytest.approx(mws(lo, hi, y))
    with pytest.raises(ValueError):
        mws([1.0], [2.0, 3.0], [1.0])


def test_empirical_coverage():
    y = np.arange(101.0)
    assert empirical_coverage(np.inf, y) == 1.0
    assert empirical_coverage(np.median(y), y) == pytest.approx(0.5, abs=0.01)
    with pytest.raises(ValueError):
        empirical_coverage(1.0, [])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_crps_matches_dense_pinball(seed):
    # CRPS = 2 * integral of pinball over levels, for a smooth mixture density
    rng = np.random.default_rng(seed)
    delta = 0.05
    grid = np.arange(0, 200 + delta / 2, delta)
    mus, sds = rng.uniform(60, 140, 2), rng.uniform(5, 20, 2)
    density = sum(np.exp(-0.5 * ((grid - m) / s) ** 2) / s for m, s in zip(mus, sds))
    dist = _dist_from_density(0.0, delta, density)
    y = rng.uniform(50, 150)
    taus = (np.arange(1001) + 0.5) / 1001
    q = np.interp(taus, dist.cdf, dist.grid)
    ref = 2 * np.mean(pinball(y, q, taus))
    assert crps(dist, y) == pytest.approx(ref, rel=0.01)
