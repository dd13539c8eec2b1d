"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad flags, bad input data), 2 internal
error (including unwritable output).
"""

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from hybridcast import __version__

log = logging.getLogger("hybridcast")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2
COMMANDS = ("prep", "train", "stack", "truncate", "postproc", "aggregate", "evaluate", "backtest", "diagnose",
            "synth", "pipeline")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _add_train_flags(p):
    p.add_argument("--num-estimators", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--num-leaves", type=int, default=16)
    p.add_argument("--min-data-in-leaf", type=int, default=20)
    p.add_argument("--lambda-l1", type=float, default=0.0)
    p.add_argument("--lambda-l2", type=float, default=0.0)
    p.add_argument("--histogram-bins", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="hybridcast", description="Probabilistic wind/solar forecasting and day-ahead trading.")
    parser.add_argument("--version", action="version", version=f"hybridcast {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("prep", help="build a modelling dataset from weather and energy CSVs")
    p.add_argument("--weather", required=True)
    p.add_argument("--energy", required=True)
    p.add_argument("--kind", choices=("wind", "solar"), required=True)
    p.add_argument("--source", default="dwd")
    p.add_argument("--flt-min", type=float, default=23.0)
    p.add_argument("--flt-max", type=float, default=47.0)
    p.add_argument("--ref-hour", type=int, action="append", help="keep only these reference-run hours")
    p.add_argument("--capacity", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train boosted quantile (or squared-error) models")
    p.add_argument("--data", required=True, help="dataset CSV from 'prep'")
    p.add_argument("--levels", default="desk", help="dense, desk, target or a comma list")
    p.add_argument("--loss", default="pinball",
                   help="'pinball' (one model per --levels entry), 'pinball:<tau>' or 'mse'")
    p.add_argument("--config", help="key = value file of TrainConfig fields; overrides the flags")
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--predict", help="dataset CSV to forecast with the trained model")
    p.add_argument("--forecast-out", help="where to write the forecast of --predict")
    _add_train_flags(p)

    p = sub.add_parser("stack", help="fit or apply per-level stacking of two sister forecasts")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--actuals", help="CSV with timestamp,target (needed to fit)")
    p.add_argument("--model", help="existing combiner JSON to apply instead of fitting")
    p.add_argument("--model-out")
    p.add_argument("--out", help="stacked forecast CSV")

    p = sub.add_parser("truncate", help="fit or apply capacity-aware truncation")
    p.add_argument("--forecast", required=True)
    p.add_argument("--capacity", type=float, required=True)
    p.add_argument("--actuals")
    p.add_argument("--model")
    p.add_argument("--model-out")
    p.add_argument("--out")

    p = sub.add_parser("postproc", help="fit or apply polynomial post-processing")
    p.add_argument("--forecast", required=True)
    p.add_argument("--actuals")
    p.add_argument("--capacity", type=float)
    p.add_argument("--model")
    p.add_argument("--model-out")
    p.add_argument("--out")

    p = sub.add_parser("aggregate", help="total-generation quantiles from wind and solar forecasts")
    p.add_argument("--wind", required=True)
    p.add_argument("--solar", required=True)
    p.add_argument("--wind-capacity", type=float, required=True)
    p.add_argument("--solar-capacity", type=float, required=True)
    p.add_argument("--levels", default="target")
    p.add_argument("--delta", type=float)
    p.add_argument("--method", choices=("convolution", "sum"), default="convolution")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score a quantile forecast")
    p.add_argument("--forecast", required=True)
    p.add_argument("--actuals", required=True)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--out", help="metrics CSV (stdout if omitted)")

    p = sub.add_parser("backtest", help="walk-forward trading backtest")
    p.add_argument("--market", required=True, help="CSV timestamp,da_price,ss_price,actual")
    p.add_argument("--forecast", required=True, help="CSV timestamp,q50[,mse]")
    p.add_argument("--strategies", default="st-mse,st-q50,q50,mse,naive,persistence,ar")
    p.add_argument("--window-days", type=int, default=60)
    p.add_argument("--start", help="first test day (YYYY-MM-DD)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("diagnose", help="residual independence test between wind and solar")
    p.add_argument("--residuals", help="CSV with eps_w,eps_s columns")
    p.add_argument("--wind-data", help="wind dataset CSV (residuals computed by cross-validation)")
    p.add_argument("--solar-data", help="solar dataset CSV")
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--permutations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON (stdout if omitted)")

    p = sub.add_parser("synth", help="write a registered synthetic scenario to CSV files")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run the full pipeline from a key = value config file")
    p.add_argument("--config", help="config file; omit with --dump-config to print defaults")
    p.add_argument("--dump-config", action="store_true", help="print the documented default config and exit")
    return parser


def parse_cli(argv):
    """Parse and validate; raises :class:`UsageError` on bad input."""
    args = build_parser().parse_args(argv)
    if args.command == "pipeline":
        from hybridcast.harness.pipeline import PipelineConfig, load_config

        if args.dump_config:
            args.config_obj = PipelineConfig()
        elif not args.config:
            raise UsageError("pipeline: --config is required")
        else:
            try:
                args.config_obj = load_config(args.config)
            except (OSError, ValueError) as exc:
                raise UsageError(f"pipeline: {exc}") from exc
    return args


def _read_actuals(path):
    df = pd.read_csv(path)
    col = "target" if "target" in df.columns else "actual" if "actual" in df.columns else None
    if col is None or "timestamp" not in df.columns:
        raise ValueError(f"{path}: need timestamp and target (or actual) columns")
    return pd.Series(df[col].to_numpy(dtype=float), index=pd.to_datetime(df["timestamp"], utc=True))


def _align(forecast, actuals):
    """Rows of the forecast with a finite actual; returns (forecast subset, actual array)."""
    idx = pd.DatetimeIndex(pd.to_datetime(forecast.timestamps, utc=True))
    y = actuals.reindex(idx).to_numpy()
    ok = np.isfinite(y)
    if not ok.any():
        raise ValueError("forecast and actuals share no timestamps")
    return forecast.subset(np.flatnonzero(ok)), y[ok]


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_prep(a):
    from hybridcast.dataprep import prepare_dataset, read_energy_csv, read_weather_csv, write_dataset_csv

    ds = prepare_dataset(read_weather_csv(a.weather), read_energy_csv(a.energy), a.kind, a.source, a.flt_min,
                         a.flt_max, a.capacity, reference_hours=a.ref_hour)
    write_dataset_csv(ds, a.out)
    log.info("wrote %d rows x %d features to %s", len(ds), len(ds.columns), a.out)


def _train_config_file(path, base):
    import dataclasses

    fields = {f.name: f.type for f in dataclasses.fields(base)}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or key not in fields:
                raise ValueError(f"{path}:{lineno}: expected '<TrainConfig field> = <value>'")
            values[key] = int(value) if fields[key] in (int, "int") else float(value)
    return dataclasses.replace(base, **values)


def cmd_train(a):
    from hybridcast.dataprep import read_dataset_csv
    from hybridcast.gbqr import BoostedModel, Loss, QuantileModelSet, TrainConfig, fit_boosted, fit_quantile_set
    from hybridcast.io import write_quantiles_csv, write_csv
    from hybridcast.levels import level_column, level_set

    ds = read_dataset_csv(a.data)
    cfg = TrainConfig(learning_rate=a.learning_rate, max_depth=a.max_depth, num_leaves=a.num_leaves,
                      min_data_in_leaf=a.min_data_in_leaf, num_estimators=a.num_estimators, lambda_l1=a.lambda_l1,
                      lambda_l2=a.lambda_l2, histogram_bins=a.histogram_bins, rng_seed=a.seed)
    if a.config:
        cfg = _train_config_file(a.config, cfg)
    if a.loss != "pinball":
        model = fit_boosted(ds.X.to_numpy(), ds.y, Loss.parse(a.loss), cfg, ds.columns)
        model.save(a.out)
    else:
        model = fit_quantile_set(ds.X.to_numpy(), ds.y, level_set(a.levels), cfg, ds.columns)
        _write_json({"format": "hybridcast-quantile-set", **model.to_dict()}, a.out)
    if a.predict:
        if not a.forecast_out:
            raise ValueError("--predict needs --forecast-out")
        test = read_dataset_csv(a.predict)
        if test.columns != ds.columns:
            raise ValueError("prediction dataset has a different feature schema")
        if isinstance(model, BoostedModel):
            col = "mse" if model.loss.kind == "mse" else level_column(model.loss.tau)
            write_csv(pd.DataFrame({"timestamp": test.frame["timestamp"], col: model.predict(test.X.to_numpy())}),
                      a.forecast_out)
        else:
            assert isinstance(model, QuantileModelSet)
            write_quantiles_csv(model.predict(test.X.to_numpy(), test.timestamps), a.forecast_out)


def cmd_stack(a):
    from hybridcast.aggregate import QuantileForecast, rearrange_monotone
    from hybridcast.ensemble import StackingCombiner, fit_stacking, predict_stacked
    from hybridcast.io import read_quantiles_csv, write_quantiles_csv

    fa, fb = read_quantiles_csv(a.a), read_quantiles_csv(a.b)
    ia = pd.DatetimeIndex(pd.to_datetime(fa.timestamps, utc=True))
    ib = pd.DatetimeIndex(pd.to_datetime(fb.timestamps, utc=True))
    common = ia.intersection(ib)
    fa, fb = fa.subset(ia.get_indexer(common)), fb.subset(ib.get_indexer(common))
    if a.model:
        comb = StackingCombiner.from_dict(_read_json(a.model))
    else:
        if not a.actuals:
            raise ValueError("fitting needs --actuals (or pass --model to apply)")
        y = _read_actuals(a.actuals).reindex(common).to_numpy()
        comb = fit_stacking(fa, fb, y)
        if a.model_out:
            _write_json(comb.to_dict(), a.model_out)
    if a.out:
        st = predict_stacked(comb, fa, fb)
        write_quantiles_csv(QuantileForecast(st.levels, rearrange_monotone(st.values), st.timestamps), a.out)


def cmd_truncate(a):
    from hybridcast.ensemble import TruncationModel, apply_truncation, fit_truncation
    from hybridcast.io import read_quantiles_csv, write_quantiles_csv

    fc = read_quantiles_csv(a.forecast)
    if a.model:
        model = TruncationModel.from_dict(_read_json(a.model))
    else:
        if not a.actuals:
            raise ValueError("fitting needs --actuals (or pass --model to apply)")
        sub, y = _align(fc, _read_actuals(a.actuals))
        model = fit_truncation(y, sub, a.capacity)
        if a.model_out:
            _write_json(model.to_dict(), a.model_out)
    if a.out:
        write_quantiles_csv(apply_truncation(fc, model, a.capacity), a.out)


def cmd_postproc(a):
    from hybridcast.io import read_quantiles_csv, write_quantiles_csv
    from hybridcast.postproc import OnlineWindow, PostProcessModel, apply_poly, fit_window

    fc = read_quantiles_csv(a.forecast)
    if a.model:
        model = PostProcessModel.load(a.model)
    else:
        if not a.actuals:
            raise ValueError("fitting needs --actuals (or pass --model to apply)")
        sub, y = _align(fc, _read_actuals(a.actuals))
        window = OnlineWindow(sub.timestamps, sub.values, np.maximum(y, 0.0), sub.levels, a.capacity)
        model = fit_window(window, a.capacity)
        if a.model_out:
            model.save(a.model_out)
    if a.out:
        write_quantiles_csv(apply_poly(model, fc, a.capacity), a.out)


def cmd_aggregate(a):
    from hybridcast.aggregate import aggregate_quantiles, quantile_sum
    from hybridcast.io import read_quantiles_csv, write_quantiles_csv
    from hybridcast.levels import level_set

    w, s = read_quantiles_csv(a.wind), read_quantiles_csv(a.solar)
    iw = pd.DatetimeIndex(pd.to_datetime(w.timestamps, utc=True))
    is_ = pd.DatetimeIndex(pd.to_datetime(s.timestamps, utc=True))
    common = iw.intersection(is_)
    w, s = w.subset(iw.get_indexer(common)), s.subset(is_.get_indexer(common))
    levels = level_set(a.levels)
    if a.method == "sum":
        out = quantile_sum(w, s, levels)
    else:
        audit = {}
        out = aggregate_quantiles(w, s, levels, a.wind_capacity, a.solar_capacity, a.delta, audit)
        log.info("convolved %d periods, max mass error %.2e", audit.get("n_distributions", 0),
                 audit.get("max_mass_error", 0.0))
    write_quantiles_csv(out, a.out)


def evaluation_frame(forecast, actuals, alpha=0.2):
    from hybridcast.metrics import empirical_coverage, mpl, mws_from_quantiles

    rows = [("mpl", mpl(actuals, forecast.values, forecast.levels)), ("n", float(actuals.size))]
    lo_tau, hi_tau = alpha / 2, 1 - alpha / 2
    if np.any(np.isclose(forecast.levels, lo_tau)) and np.any(np.isclose(forecast.levels, hi_tau)):
        rows.append(("mws", mws_from_quantiles(forecast.values, forecast.levels, actuals, alpha)))
    for j, tau in enumerate(forecast.levels):
        rows.append((f"coverage_q{tau:g}", empirical_coverage(forecast.values[:, j], actuals)))
    return pd.DataFrame(rows, columns=["metric", "value"])


def cmd_evaluate(a):
    from hybridcast.io import read_quantiles_csv, write_csv

    sub, y = _align(read_quantiles_csv(a.forecast), _read_actuals(a.actuals))
    frame = evaluation_frame(sub, y, a.alpha)
    if a.out:
        write_csv(frame, a.out)
    else:
        frame.to_csv(sys.stdout, index=False, lineterminator="\n", float_format="%.10g")


def cmd_backtest(a):
    from hybridcast.io import RunResults, emit_report, read_market_csv
    from hybridcast.trading.backtest import backtest

    market = read_market_csv(a.market)
    fc = pd.read_csv(a.forecast)
    if "q50" not in fc.columns:
        if "q0.5" in fc.columns:
            fc = fc.rename(columns={"q0.5": "q50"})
        else:
            raise ValueError(f"{a.forecast}: need a q50 (or q0.5) column")
    strategies = [s.strip() for s in a.strategies.split(",") if s.strip()]
    report = backtest(strategies, market, fc, a.window_days, a.start, seed=a.seed)
    metrics = [("trading", s, "revenue", v) for s, v in report.totals.items()]
    for s, parts in report.decomposition.items():
        metrics.extend(("trading", s, k, v) for k, v in parts.items())
    results = RunResults(
        metrics=pd.DataFrame(metrics, columns=["component", "model", "metric", "value"]),
        daily_revenue=report.daily, scatter=report.scatter, seed=a.seed,
        config={k: v for k, v in vars(a).items() if k != "func"},
        inputs={"market": _digest(a.market), "forecast": _digest(a.forecast)},
        span=(market.timestamps[0], market.timestamps[-1]) if len(market) else (None, None),
    )
    emit_report(results, a.out)
    for s in report.totals:
        print(f"{s}\t{report.totals[s]:.2f}")


def _digest(path):
    from hybridcast.io import file_digest
    return file_digest(path)


def cmd_diagnose(a):
    from hybridcast.diagnostics import ResidualPair, fit_anm_residuals, independence_report

    if a.residuals:
        df = pd.read_csv(a.residuals)
        if not {"eps_w", "eps_s"} <= set(df.columns):
            raise ValueError(f"{a.residuals}: need eps_w and eps_s columns")
        pair = ResidualPair(df["eps_w"].to_numpy(), df["eps_s"].to_numpy())
    elif a.wind_data and a.solar_data:
        from hybridcast.dataprep import read_dataset_csv

        w, s = read_dataset_csv(a.wind_data, "wind"), read_dataset_csv(a.solar_data, "solar")
        common = pd.Index(w.frame["timestamp"]).intersection(pd.Index(s.frame["timestamp"]))
        w = w.subset(w.frame["timestamp"].isin(common).to_numpy())
        s = s.subset(s.frame["timestamp"].isin(common).to_numpy())
        pair = fit_anm_residuals(w.X.to_numpy(), w.y, s.X.to_numpy(), s.y)
    else:
        raise ValueError("pass --residuals or both --wind-data and --solar-data")
    report = independence_report(pair, a.bins, a.permutations, a.seed)
    text = json.dumps(report, indent=1, sort_keys=True)
    if a.out:
        with open(a.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_synth(a):
    from hybridcast.harness.scenarios import generate, get_scenario

    overrides = {"seed": a.seed}
    if a.days:
        overrides["days"] = a.days
    generate(get_scenario(a.scenario, **overrides)).write(a.out)


def cmd_pipeline(a):
    from hybridcast.harness.pipeline import format_config, run_pipeline

    if a.dump_config:
        sys.stdout.write(format_config(a.config_obj))
        return
    out = run_pipeline(a.config_obj)
    m = out.results.metrics
    for _, row in m[m["metric"].isin(["mpl", "revenue"])].iterrows():
        print(f"{row['component']}\t{row['model']}\t{row['metric']}\t{row['value']:.4f}")


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def _is_user_error(exc):
    from hybridcast.io import ReportError

    seen = exc
    while seen is not None:
        if isinstance(seen, ReportError):
            return False
        if isinstance(seen, (ValueError, KeyError, FileNotFoundError, UsageError)):
            return True
        seen = seen.__cause__
    return False


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_cli(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = os.environ.get("HYBRIDCAST_THREADS")
    if threads is not None and not threads.isdigit():
        print("error: HYBRIDCAST_THREADS must be a positive integer", file=sys.stderr)
        return EXIT_USER
    try:
        HANDLERS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = EXIT_USER if _is_user_error(exc) else EXIT_INTERNAL
        print(f"error: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            log.debug("internal error", exc_info=True)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
