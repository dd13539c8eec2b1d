import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from hybridcast.aggregate import (DiscreteDistribution, QuantileForecast, aggregate_quantiles,
                                  cdf_from_pdf, cdf_from_quantiles, check_mass, convolve,
                                  pdf_from_cdf, quantile_sum, quantiles_from_cdf,
                                  rearrange_monotone)
from hybridcast.harness.oracles import normal_sum_quantiles
from hybridcast.levels import DENSE_LEVELS, TARGET_LEVELS


def _uniform(lo, hi, delta):
    n = int(round((hi - lo) / delta))
    density = np.r_[0.0, np.ones(n)] / (n * delta)
    return cdf_from_pdf(DiscreteDistribution(lo, delta, density, None))


def _normal_forecast(mu, sd, levels=DENSE_LEVELS):
    return QuantileForecast(levels, [mu + sd * norm.ppf(levels)])


def test_two_level_cdf_interpolates():
    dist = cdf_from_quantiles([0.25, 0.75], [1.0, 3.0], 0.0, 0.01, 401)
    k = int(round(2.0 / 0.01))
    assert dist.cdf[k] == pytest.approx(0.5, abs=1e-9)


def test_uniform_convolution_is_triangle():
    delta = 0.01
    tri = convolve(pdf_from_cdf(_uniform(0, 1, delta)), pdf_from_cdf(_uniform(0, 1, delta)))
    assert quantiles_from_cdf(tri, [0.5])[0] == pytest.approx(1.0, abs=2 * delta)
    # triangle CDF at 0.5 is 0.125
    k = int(round((0.5 - tri.grid_start) / delta))
    assert tri.cdf[k] == pytest.approx(0.125, abs=0.02)
    check_mass(tri)


@settings(max_examples=30, deadline=None)
@given(st.floats(10, 300), st.floats(2, 40), st.floats(10, 300), st.floats(2, 40))
def test_convolution_adds_mean_and_variance(ma, sa, mb, sb):
    delta = 0.5
    a = pdf_from_cdf(cdf_from_quantiles(DENSE_LEVELS, ma + sa * norm.ppf(DENSE_LEVELS), -200.0, delta, 1401))
    b = pdf_from_cdf(cdf_from_quantiles(DENSE_LEVELS, mb + sb * norm.ppf(DENSE_LEVELS), -200.0, delta, 1401))
    total = convolve(a, b)
    assert abs(total.mass - 1.0) <= 1e-9
    assert total.mean() == pytest.approx(a.mean() + b.mean(), abs=delta)
    assert total.var() == pytest.approx(a.var() + b.var(), rel=1e-3, abs=delta ** 2)


def test_convolve_rejects_mixed_grids():
    with pytest.raises(ValueError):
        convolve(_uniform(0, 1, 0.01), _uniform(0, 1, 0.02))


def test_normal_sum_matches_analytic():
    wind, solar = _normal_forecast(100, 15), _normal_forecast(50, 8)
    out = aggregate_quantiles(wind, solar, TARGET_LEVELS, 300.0, 200.0)
    delta = 500 / 2048
    ref = normal_sum_quantiles(100, 15, 50, 8, TARGET_LEVELS)
    assert np.max(np.abs(out.values[0] - ref)) <= max(0.005 * 500, 2 * delta)


def test_degenerate_solar_is_exact_sum():
    wind = _normal_forecast(200, 30)
    solar = QuantileForecast(DENSE_LEVELS, np.zeros((1, DENSE_LEVELS.size)))
    out = aggregate_quantiles(wind, solar, TARGET_LEVELS, 600.0, 700.0)
    np.testing.assert_allclose(out.values[0], np.interp(TARGET_LEVELS, DENSE_LEVELS, wind.values[0]))
    np.testing.assert_allclose(out.values, quantile_sum(wind, solar, TARGET_LEVELS).values)


def test_aggregate_audit_records_mass():
    audit = {}
    aggregate_quantiles(_normal_forecast(200, 30), _normal_forecast(100, 20), TARGET_LEVELS, 600.0, 700.0,
                        audit=audit)
    assert audit["n_distributions"] == 3
    assert audit["max_mass_error"] <= 1e-9


def test_aggregate_rejects_misaligned():
    with pytest.raises(ValueError):
        aggregate_quantiles(_normal_forecast(1, 1), QuantileForecast(DENSE_LEVELS, np.zeros((2, 101))),
                            TARGET_LEVELS, 10.0, 10.0)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30))
def test_rearrangement_sorts(values):
    out = rearrange_monotone(values)
    assert np.all(np.diff(out) >= 0)
    assert sorted(values) == list(out)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_aggregate_output_monotone(seed):
    rng = np.random.default_rng(seed)
    w = np.sort(rng.uniform(0, 600, size=(3, DENSE_LEVELS.size)), axis=1)
    s = np.sort(rng.uniform(0, 700, size=(3, DENSE_LEVELS.size)), axis=1)
    out = aggregate_quantiles(QuantileForecast(DENSE_LEVELS, w), QuantileForecast(DENSE_LEVELS, s),
                              TARGET_LEVELS, 600.0, 700.0)
    assert np.all(np.diff(out.values, axis=1) >= -1e-9)
    assert np.all(out.values >= -1e-9) and np.all(out.values <= 1300 + 1e-9)


def test_quantile_forecast_validation():
    with pytest.raises(ValueError):
        QuantileForecast([0.5, 0.1], [[1.0, 2.0]])
    with pytest.raises(ValueError):
        QuantileForecast([0.5], [[1.0, 2.0]])
    fc = QuantileForecast([0.1, 0.5], [[1.0, 2.0]])
    assert fc.column(0.5)[0] == 2.0
    with pytest.raises(KeyError):
        fc.column(0.9)
