import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from hybridcast.gbqr import TrainConfig
from hybridcast.harness.oracles import grid_bid_oracle, mc_aggregate_oracle, normal_sum_quantiles
from hybridcast.harness.pipeline import PipelineConfig, PipelineError, format_config, parse_config, run_on_data
from hybridcast.harness.scenarios import (REGISTRY, CensoredNormal, generate, get_scenario, spread_profile)
from hybridcast.harness.search import chronological_folds, random_search, sample_config
from hybridcast.levels import TARGET_LEVELS

from conftest import tiny_config

SMALL_SPACE = {
    "learning_rate": ("uniform", 0.05, 0.3),
    "max_depth": ("choice", [2, 3]),
    "num_estimators": ("choice", [10, 20]),
}


def test_generate_is_bit_identical():
    a = generate(get_scenario("smoke", days=5))
    b = generate(get_scenario("smoke", days=5))
    np.testing.assert_array_equal(a.wind_actual, b.wind_actual)
    np.testing.assert_array_equal(a.market.spread, b.market.spread)
    pd.testing.assert_frame_equal(a.weather[("solar", "gfs")], b.weather[("solar", "gfs")])
    c = generate(get_scenario("smoke", days=5, seed=1))
    assert not np.array_equal(a.wind_actual, c.wind_actual)


def test_solar_zero_at_night():
    data = generate(get_scenario("smoke", days=5))
    hours = data.timestamps.hour
    night = (hours < 6) | (hours >= 18)
    assert np.all(data.solar_actual[night] == 0.0)
    assert np.all(data.solar_truth.sigma[night] == 0.0)


def test_spread_means_converge():
    sc = get_scenario("seasonal_spread")
    data = generate(sc)
    means = data.market.spread.reshape(-1, 48).mean(axis=0)
    bound = 3 * sc.spread_noise / np.sqrt(sc.days)
    assert np.all(np.abs(means - spread_profile(sc.spread_amplitude)) <= bound)


def test_capacity_growth_and_outage():
    data = generate(get_scenario("capacity_shift"))
    sc = data.scenario
    assert data.solar_capacity[0] == sc.solar_capacity
    assert data.solar_capacity[-1] == pytest.approx(sc.solar_capacity * 2741 / 2609)
    out = generate(get_scenario("outage"))
    assert out.wind_available.min() == pytest.approx(out.scenario.wind_capacity * out.scenario.outage_fraction)


def test_registry_lookup():
    assert set(REGISTRY) >= {"smoke", "gaussian", "heteroscedastic", "capacity_shift", "seasonal_spread",
                             "asymmetric", "outage", "dependent"}
    with pytest.raises(ValueError):
        get_scenario("nope")


def test_mc_oracle_degenerate_and_gaussian():
    point = CensoredNormal([100.0], [0.0], 0.0, 1000.0)
    wide = CensoredNormal([300.0], [20.0], -1e9, 1e9)
    out = mc_aggregate_oracle(wide, point, TARGET_LEVELS, n_draws=200_000)
    np.testing.assert_allclose(out.values[0], 400 + 20 * norm.ppf(TARGET_LEVELS), atol=0.3)
    exact = mc_aggregate_oracle(point, point, TARGET_LEVELS, n_draws=100_000)
    np.testing.assert_allclose(exact.values[0], 200.0)
    both = mc_aggregate_oracle(wide, CensoredNormal([50.0], [10.0], -1e9, 1e9), TARGET_LEVELS, n_draws=400_000)
    np.testing.assert_allclose(both.values[0], normal_sum_quantiles(300, 20, 50, 10, TARGET_LEVELS), atol=0.3)
    with pytest.raises(ValueError):
        mc_aggregate_oracle(wide, point, TARGET_LEVELS, n_draws=10)


def test_grid_bid_oracle():
    assert grid_bid_oracle(123.456, 0.0) == pytest.approx(123.46)
    assert grid_bid_oracle(-5.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        grid_bid_oracle(1.0, 1.0, step=0.0)


def test_chronological_folds_partition():
    ts = pd.date_range("2024-01-01", periods=300, freq="30min").to_numpy()
    masks, _ = chronological_folds(ts, 3)
    assert np.all(np.sum(masks, axis=0) == 1)
    firsts = [np.flatnonzero(m)[0] for m in masks]
    assert firsts == sorted(firsts)


def test_sample_config_in_table_ranges():
    rng = np.random.default_rng(0)
    for _ in range(50):
        cfg = sample_config(rng)
        assert 0.01 <= cfg.learning_rate <= 0.3
        assert 3 <= cfg.max_depth <= 12
        assert 100 <= cfg.num_leaves <= 1000 and cfg.num_leaves % 100 == 0
        assert 200 <= cfg.min_data_in_leaf <= 10000
        assert cfg.num_estimators in (500, 1000, 2000)
        assert cfg.lambda_l1 in range(0, 101, 10) and cfg.lambda_l2 in range(0, 101, 10)


@pytest.fixture(scope="module")
def search_data():
    data = generate(get_scenario("smoke", days=9))
    return data.dataset("wind", "dwd", 0, 48), data.dataset("wind", "dwd", 23, 47, reference_hours=(0,))


def test_random_search_properties(search_data):
    train, test = search_data
    base = TrainConfig(histogram_bins=32, min_data_in_leaf=20)
    with pytest.raises(ValueError):
        random_search(train, 0, test)
    one, trials = random_search(train, 1, test, seed=3, space=SMALL_SPACE, base=base)
    assert one == sample_config(np.random.default_rng(3), SMALL_SPACE, base) and len(trials) == 1
    best, trials = random_search(train, 4, test, seed=5, space=SMALL_SPACE, base=base)
    again, _ = random_search(train, 4, test, seed=5, space=SMALL_SPACE, base=base)
    assert best == again
    scores = [s for s, _ in trials]
    assert min(scores) <= np.median(scores)
    assert dict(zip([id(c) for _, c in trials], scores))[id(best)] == min(scores)


def test_config_round_trip_and_rejection():
    cfg = PipelineConfig(scenario="outage", seed=4, postprocess=False, levels="0.1,0.5,0.9")
    assert parse_config(format_config(cfg)) == cfg
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config("bogus = 1\n")
    with pytest.raises(ValueError):
        parse_config("postprocess = maybe\n")


def test_pipeline_outputs(tiny_run):
    cfg, out = tiny_run
    m = out.results.metrics
    names = set(zip(m["component"], m["model"]))
    assert {("wind", "final"), ("solar", "postprocessed"), ("total", "aggregate")} <= names
    assert out.audit["max_mass_error"] <= 1e-9
    assert len(out.results.daily_revenue) == cfg.days - cfg.train_days
    for fc in out.forecasts.values():
        assert np.all(np.diff(fc.values, axis=1) >= -1e-9)


def test_pipeline_stage_errors_name_the_stage():
    data = generate(get_scenario("smoke", days=10))
    with pytest.raises(PipelineError, match="config"):
        run_on_data(data, tiny_config("unused", train_days=10))
    with pytest.raises(PipelineError, match="trading"):
        run_on_data(data, tiny_config("unused", strategies="st-mse,bogus"))
