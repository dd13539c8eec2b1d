"""Turn raw NWP grids and metered generation into modelling datasets.

Weather input is one CSV per (plant, source) with columns
``reference_time,valid_time,variable,p0,p1,...`` (one column per grid point).
Energy input has ``timestamp,target``. Timestamps are ISO-8601 UTC.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

STATS = ("mean", "max", "min", "p25", "p75")
DEFAULT_OFFSETS = (-1, 0, 1)
HALF_HOUR = pd.Timedelta(minutes=30)

# (variable, statistic) pairs feeding each dataset kind before time shifting
FEATURE_SETS = {
    "wind": [("ws100", "max"), ("ws100", "mean"), ("ws100", "min")],
    "solar": [("rad", "max"), ("rad", "mean"), ("rad", "min"), ("cloud", "mean")],
}


@dataclass(frozen=True)
class RawWeatherGrid:
    valid_time: pd.Timestamp
    reference_time: pd.Timestamp
    variable: str
    values: tuple

    def __post_init__(self):
        if pd.Timestamp(self.valid_time) < pd.Timestamp(self.reference_time):
            raise ValueError("valid_time precedes reference_time")
        if len(self.values) == 0:
            raise ValueError("empty grid")


@dataclass
class Dataset:
    """Aligned feature rows: ``frame`` holds ``timestamp``, the feature columns and ``target``."""

    frame: pd.DataFrame
    columns: list
    kind: str = "wind"
    source: str = "dwd"
    meta: pd.DataFrame = field(default=None)

    def __post_init__(self):
        if self.kind not in ("wind", "solar", "total"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        ts = pd.DatetimeIndex(self.frame["timestamp"])
        if len(ts) > 1 and not ts.is_monotonic_increasing or ts.has_duplicates:
            raise ValueError("dataset timestamps must be strictly increasing")

    def __len__(self):
        return len(self.frame)

    @property
    def X(self):
        return self.frame[self.columns]

    @property
    def y(self):
        return self.frame["target"].to_numpy(dtype=float)

    @property
    def timestamps(self):
        return self.frame["timestamp"].to_numpy()

    def subset(self, mask):
        meta = None if self.meta is None else self.meta[mask].reset_index(drop=True)
        return Dataset(self.frame[mask].reset_index(drop=True), self.columns, self.kind, self.source, meta)


def _utc(values):
    return pd.to_datetime(values, utc=True)


def spatial_aggregate(grid):
    """(mean, max, min, p25, p75) of a grid's values; linear-interpolated percentiles."""
    values = grid.values if isinstance(grid, RawWeatherGrid) else grid
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty grid")
    p25, p75 = np.percentile(v, [25, 75])
    return float(np.mean(v)), float(np.max(v)), float(np.min(v)), float(p25), float(p75)


def spatial_features(weather):
    """Row-wise spatial summary of a wide weather frame (columns ``p0..pK``)."""
    points = [c for c in weather.columns if c.startswith("p") and c[1:].isdigit()]
    if not points:
        raise ValueError("weather frame has no grid-point columns")
    v = weather[points].to_numpy(dtype=float)
    out = weather[["reference_time", "valid_time", "variable"]].copy()
    out["mean"] = np.nanmean(v, axis=1)
    out["max"] = np.nanmax(v, axis=1)
    out["min"] = np.nanmin(v, axis=1)
    pct = np.nanpercentile if np.isnan(v).any() else np.percentile
    out["p25"], out["p75"] = pct(v, [25, 75], axis=1)
    return out.dropna(subset=list(STATS)).reset_index(drop=True)


def lead_time_filter(records, min_h=23.0, max_h=47.0, reference_hours=None):
    """Keep records with ``min_h <= lead <= max_h`` hours; latest reference per valid time wins."""
    if min_h >= max_h:
        raise ValueError("min_h must be below max_h")
    if len(records) == 0:
        return records.copy()
    ref = _utc(records["reference_time"])
    valid = _utc(records["valid_time"])
    lead = (valid - ref) / pd.Timedelta(hours=1)
    keep = (lead >= min_h) & (lead <= max_h)
    if reference_hours is not None:
        keep &= ref.dt.hour.isin(list(reference_hours))
    out = records[keep.to_numpy()].copy()
    out["reference_time"] = _utc(out["reference_time"])
    out["valid_time"] = _utc(out["valid_time"])
    keys = ["valid_time"] + (["variable"] if "variable" in out.columns else [])
    out = out.sort_values(keys + ["reference_time"], kind="stable")
    out = out.drop_duplicates(subset=keys, keep="last")
    return out.sort_values(keys, kind="stable").reset_index(drop=True)


def resample_halfhour(series):
    """Linear interpolation of an hourly frame (``timestamp`` + value columns) onto :00/:30 points."""
    if len(series) < 2:
        raise ValueError("cannot interpolate a single record")
    ts = _utc(series["timestamp"])
    if not ts.is_monotonic_increasing or ts.duplicated().any():
        raise ValueError("timestamps must be strictly increasing")
    start = ts.iloc[0].ceil("30min")
    end = ts.iloc[-1].floor("30min")
    grid = pd.date_range(start, end, freq="30min")
    x = ts.astype("int64").to_numpy()
    xg = grid.asi8
    out = pd.DataFrame({"timestamp": grid})
    for col in series.columns:
        if col == "timestamp":
            continue
        y = series[col].to_numpy(dtype=float)
        out[col] = np.interp(xg, x, y)
    return out


def _shift_name(col, k):
    return col if k == 0 else f"{col}_{'m' if k < 0 else 'p'}{abs(k)}"


def temporal_shift_features(frame, offsets=DEFAULT_OFFSETS, columns=None):
    """Expand each base column into one column per half-hour offset (negative = past).

    Shifting is by timestamp, so gaps produce missing values; rows lacking
    any shifted value are dropped.
    """
    offsets = [int(k) for k in offsets]
    columns = [c for c in frame.columns if c != "timestamp"] if columns is None else list(columns)
    base = frame.set_index(_utc(frame["timestamp"]))[columns]
    out = pd.DataFrame(index=base.index)
    for col in columns:
        for k in offsets:
            out[_shift_name(col, k)] = base[col].reindex(base.index + k * HALF_HOUR).to_numpy()
    out = out.dropna()
    out.index.name = "timestamp"
    return out.reset_index()


def clean_targets(frame, capacity):
    """Drop NaN and over-capacity targets; clamp negatives to zero."""
    if not capacity > 0:
        raise ValueError("capacity must be positive")
    t = frame["target"].to_numpy(dtype=float)
    cap = np.broadcast_to(np.asarray(capacity, dtype=float), t.shape)
    keep = np.isfinite(t) & (t <= cap)
    out = frame[keep].copy()
    out["target"] = np.maximum(out["target"].to_numpy(dtype=float), 0.0)
    return out.reset_index(drop=True)


def weather_table(weather, kind, min_h=23.0, max_h=47.0, reference_hours=None):
    """Hourly wide table of the kind's base features plus the reference time used."""
    feats = spatial_features(weather)
    feats = lead_time_filter(feats, min_h, max_h, reference_hours)
    wanted = FEATURE_SETS[kind]
    cols = {}
    refs = None
    for var, stat in wanted:
        sub = feats[feats["variable"] == var].set_index("valid_time")
        if sub.empty:
            raise ValueError(f"weather data lacks variable {var!r}")
        cols[f"{var}_{stat}"] = sub[stat]
        refs = sub["reference_time"] if refs is None else refs
    table = pd.DataFrame(cols).dropna()
    table["ref_epoch"] = refs.reindex(table.index).astype("int64") / 1e9
    table.index.name = "timestamp"
    return table.reset_index()


def prepare_dataset(weather, energy, kind, source="dwd", flt_min=23.0, flt_max=47.0, capacity=None,
                    offsets=DEFAULT_OFFSETS, reference_hours=None):
    """Full preparation: spatial features, lead filter, half-hourly resampling, shifts, alignment, cleaning."""
    if kind not in FEATURE_SETS:
        raise ValueError(f"unknown kind {kind!r}")
    table = weather_table(weather, kind, flt_min, flt_max, reference_hours)
    pieces = []
    # interpolate within contiguous hourly runs only
    ts = _utc(table["timestamp"])
    breaks = np.flatnonzero(np.diff(ts.astype("int64").to_numpy()) != 3600 * 10**9) + 1
    for chunk in np.split(np.arange(len(table)), breaks):
        if chunk.size >= 2:
            pieces.append(resample_halfhour(table.iloc[chunk]))
    if not pieces:
        raise ValueError("not enough weather records to build a dataset")
    half = pd.concat(pieces, ignore_index=True).drop_duplicates("timestamp", keep="first")
    base_cols = [f"{v}_{s}" for v, s in FEATURE_SETS[kind]]
    shifted = temporal_shift_features(half, offsets, base_cols)
    columns = [c for c in shifted.columns if c != "timestamp"]
    if kind == "solar":
        stamp = _utc(shifted["timestamp"])
        shifted["period"] = (stamp.dt.hour * 2 + stamp.dt.minute // 30).astype(float)
        columns.append("period")
    # reference time of the hourly record at or before each half hour (never interpolated)
    hourly_ref = table.set_index(_utc(table["timestamp"]))["ref_epoch"]
    ref = hourly_ref.reindex(_utc(half["timestamp"]), method="ffill")
    ref.index = _utc(half["timestamp"])
    en = energy[["timestamp", "target"]].copy()
    en["timestamp"] = _utc(en["timestamp"])
    merged = shifted.merge(en, on="timestamp", how="inner")
    merged["ref_epoch"] = np.floor(ref.reindex(merged["timestamp"]).to_numpy())
    if capacity is not None:
        merged = clean_targets(merged, capacity)
    else:
        merged = merged[np.isfinite(merged["target"].to_numpy(dtype=float))].reset_index(drop=True)
    reference = pd.to_datetime(merged["ref_epoch"].to_numpy(), unit="s", utc=True)
    meta = pd.DataFrame({
        "reference_time": reference,
        "lead_hours": (merged["timestamp"] - reference).dt.total_seconds().to_numpy() / 3600.0,
    })
    frame = merged[["timestamp"] + columns + ["target"]].reset_index(drop=True)
    return Dataset(frame, columns, kind, source, meta)


def read_weather_csv(path):
    df = pd.read_csv(path)
    missing = {"reference_time", "valid_time", "variable"} - set(df.columns)
    if missing:
        raise ValueError(f"weather file lacks columns {sorted(missing)}")
    return df


def read_energy_csv(path):
    df = pd.read_csv(path)
    if not {"timestamp", "target"} <= set(df.columns):
        raise ValueError("energy file needs 'timestamp' and 'target' columns")
    return df


def write_dataset_csv(dataset, path):
    out = dataset.frame.copy()
    out["timestamp"] = _utc(out["timestamp"]).dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    out.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def read_dataset_csv(path, kind="wind", source="dwd"):
    df = pd.read_csv(path)
    if "timestamp" not in df.columns or "target" not in df.columns:
        raise ValueError("dataset file needs 'timestamp' and 'target' columns")
    df["timestamp"] = _utc(df["timestamp"])
    columns = [c for c in df.columns if c not in ("timestamp", "target")]
    return Dataset(df, columns, kind, source)
