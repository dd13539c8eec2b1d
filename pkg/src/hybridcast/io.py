"""File formats, run manifests and report emission.

All CSVs are UTF-8 with a header row, ``\\n`` line endings, ``.`` decimals and
ISO-8601 UTC timestamps. Floats are written with 10 significant digits so
reruns with equal inputs are byte-identical.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from hybridcast import __version__
from hybridcast.aggregate import QuantileForecast
from hybridcast.levels import level_column
from hybridcast.trading.strategy import MarketSeries

ISO = "%Y-%m-%dT%H:%M:%SZ"
FLOAT_FORMAT = "%.10g"
METRIC_COLUMNS = ["component", "model", "metric", "value"]
SCATTER_COLUMNS = ["timestamp", "strategy", "power_error", "spread_error", "loss"]
MANIFEST = "manifest.json"


class ReportError(OSError):
    """Output could not be written."""


def iso_strings(timestamps):
    return pd.DatetimeIndex(pd.to_datetime(timestamps, utc=True)).strftime(ISO)


def write_csv(frame, path):
    frame = frame.copy()
    for col in frame.columns:
        if pd.api.types.is_datetime64_any_dtype(frame[col]):
            frame[col] = iso_strings(frame[col])
    try:
        frame.to_csv(path, index=False, lineterminator="\n", float_format=FLOAT_FORMAT, encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc


def quantile_frame(forecast):
    data = {"timestamp": iso_strings(forecast.timestamps)} if forecast.timestamps is not None else {}
    for j, tau in enumerate(forecast.levels):
        data[level_column(tau)] = forecast.values[:, j]
    return pd.DataFrame(data)


def write_quantiles_csv(forecast, path):
    write_csv(quantile_frame(forecast), path)


def read_quantiles_csv(path):
    df = pd.read_csv(path)
    cols = [c for c in df.columns if c.startswith("q")]
    if not cols:
        raise ValueError(f"{path}: no quantile columns (expected q0.1, q0.5, ...)")
    levels = np.array([float(c[1:]) for c in cols])
    order = np.argsort(levels)
    ts = pd.to_datetime(df["timestamp"], utc=True).to_numpy() if "timestamp" in df else None
    return QuantileForecast(levels[order], df[cols].to_numpy(dtype=float)[:, order], ts)


def read_market_csv(path):
    df = pd.read_csv(path)
    df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True)
    return MarketSeries.from_frame(df)


def write_market_csv(market, path):
    write_csv(market.to_frame(), path)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    """Provenance record. Timestamps are the data span, not wall-clock time, so reruns match."""

    version: str
    config_hash: str
    inputs: dict
    seed: int
    timestamps: dict
    outputs: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


def verify_manifest(out_dir):
    """Re-hash every listed output; return the names whose digest differs."""
    manifest = RunManifest.load(os.path.join(out_dir, MANIFEST))
    bad = []
    for name, digest in manifest.outputs.items():
        path = os.path.join(out_dir, name)
        if not os.path.exists(path) or file_digest(path) != digest:
            bad.append(name)
    return bad


@dataclass
class RunResults:
    metrics: pd.DataFrame = None
    daily_revenue: pd.DataFrame = None
    quantiles: dict = field(default_factory=dict)
    scatter: pd.DataFrame = None
    config: dict = field(default_factory=dict)
    seed: int = 0
    inputs: dict = field(default_factory=dict)
    span: tuple = (None, None)
    extras: dict = field(default_factory=dict)


def _or_empty(frame, columns):
    return pd.DataFrame(columns=columns) if frame is None else frame


def emit_report(results, out_dir):
    """Write metrics, revenue, quantile and scatter CSVs plus the manifest; return written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {out_dir}: {exc}") from exc
    files = {
        "metrics.csv": _or_empty(results.metrics, METRIC_COLUMNS),
        "revenue_daily.csv": _or_empty(results.daily_revenue, ["day"]),
        "error_scatter.csv": _or_empty(results.scatter, SCATTER_COLUMNS),
    }
    for name, fc in sorted(results.quantiles.items()):
        files[f"quantiles_{name}.csv"] = quantile_frame(fc)
    for name, frame in sorted(results.extras.items()):
        files[name] = frame
    outputs = {}
    for name, frame in files.items():
        path = os.path.join(out_dir, name)
        write_csv(frame, path)
        outputs[name] = file_digest(path)
    span = [None if t is None else pd.Timestamp(t).tz_convert("UTC").strftime(ISO) if pd.Timestamp(t).tzinfo
            else pd.Timestamp(t).strftime(ISO) for t in results.span]
    manifest = RunManifest(__version__, config_hash(results.config), dict(sorted(results.inputs.items())),
                           int(results.seed), {"data_start": span[0], "data_end": span[1]}, outputs)
    path = os.path.join(out_dir, MANIFEST)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(manifest.to_json())
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return [os.path.join(out_dir, n) for n in files] + [path]
