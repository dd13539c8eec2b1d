"""Directional experiments on registered scenarios, shared by the acceptance suite and scripts/.

Each function regenerates its scenario, runs one comparison and returns a
plain dict of the numbers involved.
"""

import numpy as np
import pandas as pd

from hybridcast.aggregate import QuantileForecast, aggregate_quantiles, quantile_sum
from hybridcast.gbqr import TrainConfig, fit_boosted, fit_quantile_set
from hybridcast.harness.scenarios import generate, get_scenario
from hybridcast.levels import DENSE_LEVELS, TARGET_LEVELS
from hybridcast.metrics import mpl
from hybridcast.postproc import OnlineWindow, PostProcessModel, apply_poly, fit_window
from hybridcast.trading.backtest import backtest
from hybridcast.trading.error_shaping import evaluate_spread_model, train_error_shaping
from hybridcast.trading.strategy import PERIODS_PER_DAY

DESK_CONFIG = TrainConfig(num_estimators=100, histogram_bins=64)
BASELINE_STRATEGIES = ("st-mse", "st-q50", "q50", "mse", "naive", "persistence", "ar")


def solar_capacity_bound(scenario):
    return scenario.solar_capacity * max(1.0, scenario.capacity_growth)


def truth_forecasts(data, levels=DENSE_LEVELS):
    """Wind and solar quantile forecasts taken from the true conditional distributions."""
    w = QuantileForecast(levels, data.wind_truth.quantiles(levels), data.timestamps)
    s = QuantileForecast(levels, data.solar_truth.quantiles(levels), data.timestamps)
    return w, s


def aggregation_vs_sum(scenario="heteroscedastic", seed=0, levels=TARGET_LEVELS):
    """MPL of convolution aggregation and of the level-wise quantile sum, both from true component quantiles."""
    data = generate(get_scenario(scenario, seed=seed))
    sc = data.scenario
    w, s = truth_forecasts(data)
    agg = aggregate_quantiles(w, s, levels, sc.wind_capacity, solar_capacity_bound(sc))
    naive = quantile_sum(w, s, levels)
    y = data.total_actual
    return {"aggregate": mpl(y, agg.values, levels), "quantile_sum": mpl(y, naive.values, levels)}


def _day_of(timestamps, origin):
    return ((pd.DatetimeIndex(timestamps) - origin) // pd.Timedelta(days=1)).to_numpy()


def postprocessing_ablation(scenario="capacity_shift", seed=0, train_days=30, window_start=30, test_start=45,
                            max_days=60, cfg=DESK_CONFIG, levels=TARGET_LEVELS):
    """Solar MPL of a frozen offline model against daily online re-fitting of its post-processing.

    The offline quantile models see days before ``train_days``. The initial
    window covers ``[window_start, test_start)``; each later day is predicted
    with the current model, then appended to the window before re-fitting.
    """
    data = generate(get_scenario(scenario, seed=seed))
    origin = data.timestamps[0]
    train = data.dataset("solar", "dwd", 0.0, 48.0)
    test = data.dataset("solar", "dwd", 23.0, 47.0, reference_hours=(0,))
    rows = _day_of(train.timestamps, origin) < train_days
    models = fit_quantile_set(train.X.to_numpy()[rows], train.y[rows], levels, cfg, train.columns)
    cap = float(np.max(data.solar_capacity))
    offline = apply_poly(PostProcessModel.identity(levels, cap), models.predict(test.X.to_numpy(), test.timestamps))
    day = _day_of(test.timestamps, origin)
    y = test.y

    def window_of(idx):
        return OnlineWindow(test.timestamps[idx], offline.values[idx], y[idx], levels)

    window = window_of(np.flatnonzero((day >= window_start) & (day < test_start)))
    model = fit_window(window, cap)
    online = offline.values.copy()
    for d in range(test_start, int(day.max()) + 1):
        idx = np.flatnonzero(day == d)
        if idx.size == 0:
            continue
        online[idx] = apply_poly(model, offline.subset(idx), cap).values
        window = window.append(window_of(idx), max_days=max_days)
        model = fit_window(window, cap)
    tested = day >= test_start
    return {"offline": mpl(y[tested], offline.values[tested], levels),
            "online": mpl(y[tested], online[tested], levels),
            "final_model": model}


def total_point_forecasts(data, train_days, losses, cfg=DESK_CONFIG):
    """Wind plus solar point forecasts on the scenario index, one series per named loss.

    Models are fitted on dwd features for days before ``train_days``; test
    features come from the 00 UTC run at leads of 23-47 h. Periods without
    features are NaN.
    """
    out = {name: np.zeros(data.timestamps.size) for name in losses}
    for kind in ("wind", "solar"):
        fit_ds = data.dataset(kind, "dwd", 0.0, 48.0)
        test_ds = data.dataset(kind, "dwd", 23.0, 47.0, reference_hours=(0,))
        rows = data.rows_of(fit_ds.timestamps) // PERIODS_PER_DAY < train_days
        for name, loss in losses.items():
            model = fit_boosted(fit_ds.X.to_numpy()[rows], fit_ds.y[rows], loss, cfg)
            pred = np.full(data.timestamps.size, np.nan)
            pred[data.rows_of(test_ds.timestamps)] = model.predict(test_ds.X.to_numpy())
            out[name] += pred
    return out


def trading_ablation(scenario="seasonal_spread", seed=0, train_days=60, window_days=60,
                     strategies=BASELINE_STRATEGIES):
    """Walk-forward backtest of the baseline strategies on total-generation forecasts."""
    data = generate(get_scenario(scenario, seed=seed))
    fc = total_point_forecasts(data, train_days, {"mse": "mse", "q50": "pinball:0.5"})
    frame = pd.DataFrame({"timestamp": data.timestamps, **fc})
    return backtest(["perfect", *strategies], data.market, frame, window_days=window_days)


def error_shaping_comparison(scenario="asymmetric", seed=0, power_days=30, spread_days=60, epochs=200):
    """Test-period mean trading loss of the error-shaping and accuracy-oriented spread models.

    The power model sees days before ``power_days``; both spread models see
    ``[power_days, spread_days)``; later days are the test period.
    """
    data = generate(get_scenario(scenario, seed=seed))
    power = total_point_forecasts(data, power_days, {"mse": "mse"})["mse"]
    market = data.market
    day = data.day_index
    fit = (day >= power_days) & (day < spread_days) & np.isfinite(power)
    test = (day >= spread_days) & np.isfinite(power)
    e2e, acc = train_error_shaping(power[fit], market.period[fit], market.actual[fit], market.spread[fit],
                                   epochs=epochs, seed=seed)
    args = (power[test], market.period[test], market.actual[test], market.spread[test])
    e2e_eval = evaluate_spread_model(e2e, *args)
    acc_eval = evaluate_spread_model(acc, *args)
    return {"e2e": e2e_eval["mean_loss"], "accuracy": acc_eval["mean_loss"],
            "e2e_spread_mse": e2e_eval["spread_mse"], "accuracy_spread_mse": acc_eval["spread_mse"]}
