"""End-to-end driver: forecast wind and solar, combine, aggregate, evaluate and trade.

Time is split into three consecutive blocks:

* base: first part of the training days, fits the boosted models;
* calibration: rest of the training days, fits stacking, truncation and
  the initial post-processing window, and warms up the e2e spread model;
* test: all remaining days, forecast day-ahead from the 00:00 run and traded.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from hybridcast.aggregate import QuantileForecast, aggregate_quantiles, quantile_sum, rearrange_monotone
from hybridcast.ensemble import apply_truncation, fit_stacking, fit_truncation, predict_stacked
from hybridcast.gbqr import TrainConfig, fit_mse_oriented, fit_quantile_set
from hybridcast.harness.scenarios import generate, get_scenario
from hybridcast.io import RunResults, config_hash, emit_report
from hybridcast.levels import TARGET_LEVELS, level_set
from hybridcast.metrics import empirical_coverage, mpl, mws_from_quantiles
from hybridcast.postproc import MIN_SAMPLES, OnlineWindow, PostProcessModel, apply_poly, fit_window, rolling_update
from hybridcast.trading.backtest import backtest

log = logging.getLogger(__name__)

DAY = pd.Timedelta(days=1)


class PipelineError(RuntimeError):
    """A stage failed; the message names the stage."""


@dataclass
class PipelineConfig:
    scenario: str = "smoke"
    seed: int = 0
    days: int = 0
    out_dir: str = "pipeline_out"
    levels: str = "desk"
    train_days: int = 20
    calibration_fraction: float = 0.3
    flt_min: float = 23.0
    flt_max: float = 47.0
    num_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 4
    num_leaves: int = 16
    min_data_in_leaf: int = 20
    histogram_bins: int = 64
    postprocess: bool = True
    postprocess_window_days: int = 60
    spread_window_days: int = 14
    strategies: str = "st-mse,st-q50,q50,mse,naive,persistence,ar,e2e"
    e2e_epochs: int = 50
    threads: int = 1

    def train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, max_depth=self.max_depth, num_leaves=self.num_leaves,
                           min_data_in_leaf=self.min_data_in_leaf, num_estimators=self.num_estimators,
                           histogram_bins=self.histogram_bins, rng_seed=self.seed)

    def to_dict(self):
        return dataclasses.asdict(self)


CONFIG_DOC = {
    "scenario": "registered synthetic scenario name",
    "seed": "master random seed (scenario draws and model training)",
    "days": "horizon override in days; 0 keeps the scenario default",
    "out_dir": "directory receiving reports and the manifest",
    "levels": "quantile level set for component models: dense, desk, target or a comma list",
    "train_days": "days used for model fitting and calibration; later days are tested",
    "calibration_fraction": "share of the training days held back for stacking, truncation and post-processing",
    "flt_min": "minimum forecast lead time (hours) for test features",
    "flt_max": "maximum forecast lead time (hours) for test features",
    "num_estimators": "boosting rounds per model",
    "learning_rate": "boosting shrinkage",
    "max_depth": "maximum tree depth",
    "num_leaves": "maximum leaves per tree",
    "min_data_in_leaf": "minimum rows per leaf",
    "histogram_bins": "feature histogram bins",
    "postprocess": "true to apply online post-processing to solar forecasts",
    "postprocess_window_days": "maximum length of the rolling post-processing window",
    "spread_window_days": "trailing window for spread estimation in the backtest",
    "strategies": "comma-separated trading strategies to backtest",
    "e2e_epochs": "training epochs of the error-shaping spread model",
    "threads": "worker threads for per-level model training",
}


def _coerce(kind, raw):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw.strip())


def parse_config(text):
    """Parse ``key = value`` lines (``#`` comments); unknown keys are rejected."""
    types = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    casts = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        kind = types[key]
        kind = casts[kind] if isinstance(kind, str) else kind
        try:
            values[key] = _coerce(kind, raw)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return PipelineConfig(**values)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg):
    lines = []
    for key, value in cfg.to_dict().items():
        lines.append(f"# {CONFIG_DOC[key]}")
        lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"


@dataclass
class PipelineOutput:
    results: RunResults
    forecasts: dict
    actuals: dict
    backtest: object = None
    audit: dict = field(default_factory=dict)


def _stage(name):
    def wrap(fn):
        def run(*args, **kw):
            try:
                return fn(*args, **kw)
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(f"{name}: {exc}") from exc
        return run
    return wrap


def _index(dataset):
    return pd.DatetimeIndex(pd.to_datetime(dataset.timestamps, utc=True))


def _take(forecast, index, wanted):
    """Rows of ``forecast`` (indexed by ``index``) at the ``wanted`` timestamps."""
    pos = index.get_indexer(wanted)
    if np.any(pos < 0):
        raise ValueError("forecast lacks requested timestamps")
    return forecast.subset(pos)


@_stage("wind")
def _wind(data, cfg, levels, tcfg, blocks):
    base_end, calib_end = blocks
    sources = [name for name, _ in data.scenario.sources]
    preds, indexes, test_sets = {}, {}, {}
    for src in sources:
        train = data.dataset("wind", src)
        test = data.dataset("wind", src, cfg.flt_min, cfg.flt_max, (0,))
        rows = _index(train) < base_end
        models = fit_quantile_set(train.X.to_numpy()[rows], train.y[rows], levels, tcfg, train.columns, cfg.threads)
        indexes[src] = _index(test)
        preds[src] = models.predict(test.X.to_numpy(), indexes[src].to_numpy())
        test_sets[src] = test
    common = indexes[sources[0]]
    for src in sources[1:]:
        common = common.intersection(indexes[src])
    common = common[common >= base_end]
    parts = {src: _take(preds[src], indexes[src], common) for src in sources}
    rows = data.rows_of(common)
    y = data.wind_actual[rows]
    avail = data.wind_available[rows]
    calib = np.asarray(common < calib_end)
    a, b = parts[sources[0]], parts[sources[-1]]
    comb = fit_stacking(a.subset(calib), b.subset(calib), y[calib])
    stacked = predict_stacked(comb, a, b)
    stacked = QuantileForecast(stacked.levels, rearrange_monotone(stacked.values), stacked.timestamps)
    trunc = fit_truncation(y[calib], stacked.subset(calib), avail[calib])
    final = apply_truncation(stacked, trunc, capacity=avail)
    mse_train = data.dataset("wind", sources[0])
    mrows = _index(mse_train) < base_end
    mse_model = fit_mse_oriented(mse_train.X.to_numpy()[mrows], mse_train.y[mrows], tcfg, mse_train.columns)
    mse = mse_model.predict(test_sets[sources[0]].X.to_numpy())
    mse = pd.Series(mse, index=indexes[sources[0]]).reindex(common).to_numpy()
    out = {f"wind_{src}": parts[src] for src in sources}
    out.update(wind_stacked=stacked, wind_final=final)
    return common, out, y, mse


@_stage("solar")
def _solar(data, cfg, levels, tcfg, blocks):
    base_end, calib_end = blocks
    src = data.scenario.sources[0][0]
    train = data.dataset("solar", src)
    test = data.dataset("solar", src, cfg.flt_min, cfg.flt_max, (0,))
    rows = _index(train) < base_end
    models = fit_quantile_set(train.X.to_numpy()[rows], train.y[rows], levels, tcfg, train.columns, cfg.threads)
    idx = _index(test)
    keep = np.asarray(idx >= base_end)
    idx = idx[keep]
    offline = models.predict(test.X.to_numpy()[keep], idx.to_numpy())
    pos = data.rows_of(idx)
    y = data.solar_actual[pos]
    cap = data.solar_capacity[pos]
    offline = apply_poly(PostProcessModel.identity(levels), offline, capacity=cap)
    calib = np.flatnonzero(np.asarray(idx < calib_end))
    window = OnlineWindow(idx.to_numpy()[calib], offline.values[calib], y[calib], levels, cap[calib])
    model = PostProcessModel.identity(levels)
    if len(window) >= MIN_SAMPLES:
        model = fit_window(window)
    values = offline.values.copy()
    days = np.asarray(idx.floor("D"))
    test_days = np.unique(days[np.asarray(idx >= calib_end)])
    for day in test_days:
        r = np.flatnonzero(days == day)
        values[r] = apply_poly(model, offline.subset(r), capacity=cap[r]).values
        new = OnlineWindow(idx.to_numpy()[r], offline.values[r], y[r], levels, cap[r])
        model, window = rolling_update(model, window, new, cfg.postprocess_window_days)
    post = QuantileForecast(levels, values, offline.timestamps)
    mse_model = fit_mse_oriented(train.X.to_numpy()[rows], train.y[rows], tcfg, train.columns)
    mse = np.clip(mse_model.predict(test.X.to_numpy()[keep]), 0.0, cap)
    return idx, {"solar_offline": offline, "solar_postprocessed": post}, y, mse, model


def _metric_rows(component, name, forecast, actual):
    lv = forecast.levels
    sel = np.array([np.any(np.isclose(lv, t)) for t in TARGET_LEVELS])
    use = TARGET_LEVELS[sel] if sel.all() else lv
    vals = np.column_stack([forecast.column(t) for t in use])
    rows = [(component, name, "mpl", mpl(actual, vals, use))]
    if sel.all():
        rows.append((component, name, "mws", mws_from_quantiles(vals, use, actual)))
        rows.append((component, name, "coverage_q10", empirical_coverage(forecast.column(0.1), actual)))
        rows.append((component, name, "coverage_q90", empirical_coverage(forecast.column(0.9), actual)))
    return rows


@_stage("aggregate")
def _aggregate(data, wind, solar, audit):
    sc = data.scenario
    solar_cap = float(np.max(data.solar_capacity))
    agg = aggregate_quantiles(wind, solar, TARGET_LEVELS, sc.wind_capacity, solar_cap, audit=audit)
    return agg, quantile_sum(wind, solar, TARGET_LEVELS)


def run_on_data(data, cfg):
    """Run every stage on generated data; returns a :class:`PipelineOutput` (nothing written)."""
    levels = level_set(cfg.levels)
    tcfg = cfg.train_config()
    start = data.timestamps[0]
    if cfg.train_days >= data.scenario.days:
        raise PipelineError("config: train_days must be below the scenario horizon")
    calib_days = max(1, int(round(cfg.train_days * cfg.calibration_fraction)))
    base_end = start + (cfg.train_days - calib_days) * DAY
    calib_end = start + cfg.train_days * DAY
    blocks = (base_end, calib_end)

    w_idx, w_fc, w_y, w_mse = _wind(data, cfg, levels, tcfg, blocks)
    s_idx, s_fc, s_y, s_mse, pp_model = _solar(data, cfg, levels, tcfg, blocks)
    solar_key = "solar_postprocessed" if cfg.postprocess else "solar_offline"

    test_idx = w_idx.intersection(s_idx)
    test_idx = test_idx[test_idx >= calib_end]
    wp, sp = w_idx.get_indexer(test_idx), s_idx.get_indexer(test_idx)
    forecasts = {k: v.subset(wp) for k, v in w_fc.items()}
    forecasts.update({k: v.subset(sp) for k, v in s_fc.items()})
    actuals = {"wind": w_y[wp], "solar": s_y[sp]}
    audit = {}
    agg, qsum = _aggregate(data, forecasts["wind_final"], forecasts[solar_key], audit)
    forecasts["total_aggregate"] = agg
    forecasts["total_quantile_sum"] = qsum
    actuals["total"] = actuals["wind"] + actuals["solar"]

    metrics = []
    for name, fc in forecasts.items():
        component = name.split("_", 1)[0]
        metrics.extend(_metric_rows(component, name.split("_", 1)[1], fc, actuals[component]))
    metrics.append(("total", "aggregate", "max_mass_error", float(audit.get("max_mass_error", 0.0))))
    metrics.append(("total", "aggregate", "distributions", float(audit.get("n_distributions", 0))))

    report = _trade(data, cfg, w_idx, w_mse, s_idx, s_mse, test_idx, agg, blocks)
    metrics.extend(("trading", s, "revenue", v) for s, v in report.totals.items())
    for s, parts in report.decomposition.items():
        metrics.extend(("trading", s, k, v) for k, v in parts.items())
    metrics_df = pd.DataFrame(metrics, columns=["component", "model", "metric", "value"])

    quantiles = {name: QuantileForecast(fc.levels, fc.values, test_idx.to_numpy()) for name, fc in forecasts.items()}
    results = RunResults(
        metrics=metrics_df,
        daily_revenue=report.daily,
        quantiles=quantiles,
        scatter=report.scatter,
        # the output location does not affect results, so it stays out of the hash
        config={k: v for k, v in cfg.to_dict().items() if k != "out_dir"},
        seed=cfg.seed,
        inputs={"scenario": config_hash(data.scenario.to_dict())},
        span=(test_idx[0], test_idx[-1]) if len(test_idx) else (None, None),
        extras={"postprocess_coefficients.csv": _pp_frame(pp_model)},
    )
    return PipelineOutput(results, forecasts, actuals, report, audit)


def _pp_frame(model):
    return pd.DataFrame({"level": model.levels, "b1": model.coefficients[:, 0], "b2": model.coefficients[:, 1],
                         "b3": model.coefficients[:, 2], "lambda": model.penalties})


@_stage("trading")
def _trade(data, cfg, w_idx, w_mse, s_idx, s_mse, test_idx, agg, blocks):
    """Backtest on test days; the calibration block's out-of-sample forecasts warm up e2e."""
    base_end, calib_end = blocks
    both = w_idx.intersection(s_idx)
    both = both[both >= base_end]
    mse = pd.Series(w_mse, index=w_idx).reindex(both).to_numpy() + pd.Series(s_mse, index=s_idx).reindex(both)
    frame = pd.DataFrame({"timestamp": both, "mse": np.asarray(mse, dtype=float)})
    q50 = pd.Series(agg.column(0.5), index=test_idx)
    frame["q50"] = q50.reindex(both).to_numpy()
    strategies = [s.strip() for s in cfg.strategies.split(",") if s.strip()]
    start = np.datetime64(pd.Timestamp(calib_end).tz_convert(None), "D")
    return backtest(strategies, data.market, frame, window_days=cfg.spread_window_days, start=start,
                    e2e_epochs=cfg.e2e_epochs, seed=cfg.seed)


def run_pipeline(cfg, write=True):
    """Generate the configured scenario, run every stage and (optionally) write the reports."""
    overrides = {"seed": cfg.seed}
    if cfg.days:
        overrides["days"] = cfg.days
    data = generate(get_scenario(cfg.scenario, **overrides))
    out = run_on_data(data, cfg)
    if write:
        emit_report(out.results, cfg.out_dir)
    return out
