"""Synthetic wind/solar/market scenarios with known conditional distributions.

One latent weather truth drives generation; two NWP "sources" observe it
with source-specific error growth, grid density and missing runs. The
conditional distribution of each generation target given the latent truth is
a censored normal, kept for oracle checks.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import norm

from hybridcast.dataprep import prepare_dataset
from hybridcast.trading.strategy import MarketSeries, PERIODS_PER_DAY

GROWTH_2741_2609 = 2741.0 / 2609.0
NWP_LEADS = 49  # hourly leads 0..48
RUN_HOURS = (0, 12)


@dataclass(frozen=True)
class SourceModel:
    """NWP error model: error std reached at 48 h lead, grid points, spatial spread, run drop rate."""

    wind_error: float = 1.0
    cloud_error: float = 0.5
    points: int = 12
    spatial_spread: float = 0.5
    missing_runs: float = 0.0


DEFAULT_SOURCES = (
    ("dwd", SourceModel()),
    ("gfs", SourceModel(wind_error=1.6, cloud_error=0.8, points=4, spatial_spread=0.8, missing_runs=0.05)),
)


@dataclass(frozen=True)
class SyntheticScenario:
    name: str = "custom"
    seed: int = 0
    days: int = 30
    start: str = "2024-01-01"
    wind_capacity: float = 600.0
    solar_capacity: float = 700.0
    wind_noise: float = 0.06
    solar_noise: float = 0.05
    heteroscedastic: float = 0.0
    capacity_growth: float = 1.0
    growth_day: int = 0
    outage_days: tuple = ()
    outage_fraction: float = 1.0
    noise_correlation: float = 0.0
    spread_amplitude: float = 6.0
    spread_noise: float = 20.0
    price_level: float = 70.0
    missing_targets: float = 0.0
    sources: tuple = DEFAULT_SOURCES

    def __post_init__(self):
        if self.wind_capacity <= 0 or self.solar_capacity <= 0:
            raise ValueError("capacities must be positive")
        if self.days < 1:
            raise ValueError("horizon must be at least one day")
        if not -1.0 < self.noise_correlation < 1.0:
            raise ValueError("noise_correlation must lie in (-1, 1)")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["sources"] = [[name, dataclasses.asdict(src)] for name, src in self.sources]
        d["outage_days"] = list(self.outage_days)
        return d


# Versioned registry: changing any entry changes acceptance numbers, so bump REGISTRY_VERSION.
REGISTRY_VERSION = 1
REGISTRY = {
    "smoke": SyntheticScenario(name="smoke", days=30),
    "gaussian": SyntheticScenario(name="gaussian", days=30),
    "heteroscedastic": SyntheticScenario(name="heteroscedastic", days=60, wind_noise=0.02, solar_noise=0.03,
                                         heteroscedastic=0.25),
    "capacity_shift": SyntheticScenario(name="capacity_shift", days=90, capacity_growth=GROWTH_2741_2609,
                                        growth_day=45),
    "seasonal_spread": SyntheticScenario(name="seasonal_spread", days=120, spread_amplitude=15.0,
                                         spread_noise=20.0),
    "asymmetric": SyntheticScenario(name="asymmetric", days=90, capacity_growth=1.3, growth_day=30,
                                    spread_amplitude=8.0, spread_noise=15.0),
    "outage": SyntheticScenario(name="outage", days=60, outage_days=(20, 60), outage_fraction=0.6),
    "dependent": SyntheticScenario(name="dependent", days=60, noise_correlation=0.5),
}


def get_scenario(name, **overrides):
    if name not in REGISTRY:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(REGISTRY)}")
    return dataclasses.replace(REGISTRY[name], **overrides)


@dataclass
class CensoredNormal:
    """Row-wise normal(mu, sigma) clipped to [lower, upper]; sigma = 0 is a point mass."""

    mu: np.ndarray
    sigma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.mu, self.sigma, self.lower, self.upper = np.broadcast_arrays(
            *(np.asarray(a, dtype=float) for a in (self.mu, self.sigma, self.lower, self.upper)))

    def __len__(self):
        return self.mu.size

    def quantiles(self, levels):
        z = norm.ppf(np.asarray(levels, dtype=float))
        q = self.mu[:, None] + self.sigma[:, None] * z[None, :]
        return np.clip(q, self.lower[:, None], self.upper[:, None])

    def transform(self, z, rows=None):
        """Map standard-normal draws to samples of the selected rows (rows x draws)."""
        rows = slice(None) if rows is None else rows
        mu, s, lo, hi = (a[rows] for a in (self.mu, self.sigma, self.lower, self.upper))
        return np.clip(mu[..., None] + s[..., None] * z, lo[..., None], hi[..., None])

    def sample(self, rng, rows=None):
        rows = np.arange(len(self)) if rows is None else rows
        return self.transform(rng.standard_normal(np.size(self.mu[rows]))[:, None], rows)[:, 0]

    def subset(self, rows):
        return CensoredNormal(self.mu[rows], self.sigma[rows], self.lower[rows], self.upper[rows])

    def to_frame(self):
        return pd.DataFrame({"mu": self.mu, "sigma": self.sigma, "lower": self.lower, "upper": self.upper})


def power_curve(ws):
    """Normalised wind power curve (logistic, cut-in near 3 m/s, rated near 14 m/s)."""
    return 1.0 / (1.0 + np.exp(-(np.asarray(ws) - 9.0) / 1.6))


def clear_sky(hours):
    """Diurnal shape in [0, 1]; zero outside 06:00-18:00 UTC."""
    h = np.asarray(hours, dtype=float)
    return np.where((h > 6.0) & (h < 18.0), np.sin(np.pi * (h - 6.0) / 12.0), 0.0) ** 1.2


def spread_profile(amplitude):
    """Per-period mean spread pattern (periods 1..48)."""
    p = np.arange(PERIODS_PER_DAY)
    return amplitude * (0.7 * np.cos(2 * np.pi * (p - 16) / 48) + 0.3 * np.cos(4 * np.pi * (p - 34) / 48))


@dataclass
class SyntheticData:
    scenario: SyntheticScenario
    timestamps: pd.DatetimeIndex
    wind_truth: CensoredNormal
    solar_truth: CensoredNormal
    wind_actual: np.ndarray
    solar_actual: np.ndarray
    wind_available: np.ndarray
    solar_capacity: np.ndarray
    spread_means: np.ndarray
    weather: dict
    energy: dict
    market: MarketSeries
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def total_actual(self):
        return self.wind_actual + self.solar_actual

    @property
    def day_index(self):
        return np.arange(self.timestamps.size) // PERIODS_PER_DAY

    def dataset(self, kind, source, flt_min=0.0, flt_max=48.0, reference_hours=None):
        key = (kind, source, flt_min, flt_max, None if reference_hours is None else tuple(reference_hours))
        if key not in self._cache:
            cap = self.scenario.wind_capacity if kind == "wind" else self.scenario.solar_capacity * max(
                1.0, self.scenario.capacity_growth)
            self._cache[key] = prepare_dataset(self.weather[(kind, source)], self.energy[kind], kind, source,
                                               flt_min, flt_max, cap, reference_hours=reference_hours)
        return self._cache[key]

    @property
    def wind(self):
        return {name: self.dataset("wind", name) for name, _ in self.scenario.sources}

    @property
    def solar(self):
        return {name: self.dataset("solar", name) for name, _ in self.scenario.sources}

    def rows_of(self, timestamps):
        """Positions of the given timestamps within the scenario's half-hour index."""
        idx = self.timestamps.get_indexer(pd.DatetimeIndex(pd.to_datetime(timestamps, utc=True)))
        if np.any(idx < 0):
            raise ValueError("timestamps outside the scenario horizon")
        return idx

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        iso = "%Y-%m-%dT%H:%M:%SZ"
        for (kind, source), df in sorted(self.weather.items()):
            out = df.copy()
            for col in ("reference_time", "valid_time"):
                out[col] = out[col].dt.strftime(iso)
            out.to_csv(os.path.join(out_dir, f"weather_{kind}_{source}.csv"), index=False, lineterminator="\n",
                       float_format="%.6f")
        for kind, df in sorted(self.energy.items()):
            out = df.copy()
            out["timestamp"] = out["timestamp"].dt.strftime(iso)
            out.to_csv(os.path.join(out_dir, f"energy_{kind}.csv"), index=False, lineterminator="\n",
                       float_format="%.6f")
        market = self.market.to_frame()
        market["timestamp"] = market["timestamp"].dt.strftime(iso)
        market.to_csv(os.path.join(out_dir, "market.csv"), index=False, lineterminator="\n", float_format="%.6f")
        for kind, truth in (("wind", self.wind_truth), ("solar", self.solar_truth)):
            t = truth.to_frame()
            t.insert(0, "timestamp", self.timestamps.strftime(iso))
            t.to_csv(os.path.join(out_dir, f"truth_{kind}.csv"), index=False, lineterminator="\n",
                     float_format="%.6f")
        with open(os.path.join(out_dir, "scenario.json"), "w", encoding="utf-8") as fh:
            json.dump({"registry_version": REGISTRY_VERSION, **self.scenario.to_dict()}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _ar1(rng, n, phi):
    """Stationary unit-variance AR(1) path."""
    e = rng.standard_normal(n) * np.sqrt(1 - phi ** 2)
    out = np.empty(n)
    out[0] = rng.standard_normal()
    for i in range(1, n):
        out[i] = phi * out[i - 1] + e[i]
    return out


def _latent_hourly(rng, n_hours):
    ws = np.maximum(0.3, 8.5 + 4.0 * _ar1(rng, n_hours, 0.97))
    cloud_logit = 1.2 * _ar1(rng, n_hours, 0.95) - 0.2
    return ws, cloud_logit


def _radiation(hours, cloud):
    return 900.0 * clear_sky(hours) * (1.0 - 0.75 * cloud)


def _nwp(rng, src, hourly_times, ws, cloud_logit, n_days):
    """Long-format NWP records for every run of one source: (wind frame, solar frame)."""
    t0 = hourly_times[0]
    wind_rows, solar_rows = [], []
    leads = np.arange(NWP_LEADS)
    for day in range(n_days):
        for run_hour in RUN_HOURS:
            ref_pos = 24 * day + run_hour
            if ref_pos + NWP_LEADS > ws.size:
                continue
            # random walks in lead time: error variance grows linearly, std ~1 at 48 h.
            # Drawn before the drop decision so the stream does not depend on it.
            walk_ws = np.cumsum(rng.standard_normal(NWP_LEADS)) / np.sqrt(48.0)
            walk_cl = np.cumsum(rng.standard_normal(NWP_LEADS)) / np.sqrt(48.0)
            pts_ws = rng.standard_normal((NWP_LEADS, src.points))
            pts_rad = rng.standard_normal((NWP_LEADS, src.points))
            pts_cl = rng.standard_normal((NWP_LEADS, src.points))
            if rng.random() < src.missing_runs:
                continue
            pos = ref_pos + leads
            ws_fc = ws[pos] + src.wind_error * walk_ws
            cl_fc = 1.0 / (1.0 + np.exp(-(cloud_logit[pos] + src.cloud_error * walk_cl)))
            hours = (pos % 24).astype(float)
            rad_fc = _radiation(hours, cl_fc)
            ws_pts = np.maximum(0.0, ws_fc[:, None] + src.spatial_spread * pts_ws)
            rad_pts = np.maximum(0.0, rad_fc[:, None] * (1.0 + 0.1 * src.spatial_spread * pts_rad))
            cl_pts = np.clip(cl_fc[:, None] + 0.1 * src.spatial_spread * pts_cl, 0.0, 1.0)
            ref = t0 + pd.Timedelta(hours=int(ref_pos))
            valid = ref + pd.to_timedelta(leads, unit="h")
            wind_rows.append(("ws100", ref, valid, ws_pts))
            solar_rows.append(("rad", ref, valid, rad_pts))
            solar_rows.append(("cloud", ref, valid, cl_pts))
    return _frame(wind_rows, src.points), _frame(solar_rows, src.points)


def _frame(rows, points):
    if not rows:
        return pd.DataFrame(columns=["reference_time", "valid_time", "variable"] + [f"p{i}" for i in range(points)])
    blocks = []
    for var, ref, valid, values in rows:
        df = pd.DataFrame(values, columns=[f"p{i}" for i in range(points)])
        df.insert(0, "variable", var)
        df.insert(0, "valid_time", valid)
        df.insert(0, "reference_time", ref)
        blocks.append(df)
    return pd.concat(blocks, ignore_index=True)


def generate(scenario):
    """Draw a full scenario; bit-identical for a fixed scenario (seed included)."""
    sc = scenario
    rng = np.random.default_rng(sc.seed)
    start = pd.Timestamp(sc.start, tz="UTC")
    n = sc.days * PERIODS_PER_DAY
    timestamps = pd.date_range(start, periods=n, freq="30min")
    # hourly latent truth from one day before the horizon to two days after, for NWP leads
    hourly_times = pd.date_range(start - pd.Timedelta(days=1), periods=24 * (sc.days + 3), freq="h")
    ws_h, cl_h = _latent_hourly(rng, hourly_times.size)
    x_h = (hourly_times.asi8 - hourly_times.asi8[0]) / 3.6e12
    x_t = (timestamps.asi8 - hourly_times.asi8[0]) / 3.6e12
    ws = np.interp(x_t, x_h, ws_h)
    cloud = 1.0 / (1.0 + np.exp(-np.interp(x_t, x_h, cl_h)))
    hours = timestamps.hour + timestamps.minute / 60.0
    day = np.arange(n) // PERIODS_PER_DAY

    pc = power_curve(ws)
    avail = np.full(n, sc.wind_capacity)
    if sc.outage_days:
        lo, hi = sc.outage_days
        avail[(day >= lo) & (day < hi)] *= sc.outage_fraction
    wind_upper = np.where(avail < sc.wind_capacity, 0.95 * avail, sc.wind_capacity)
    wind_sigma = sc.wind_capacity * (sc.wind_noise + sc.heteroscedastic * 4.0 * pc * (1.0 - pc))
    wind_truth = CensoredNormal(sc.wind_capacity * pc, wind_sigma, 0.0, wind_upper)

    solar_cap = np.where(day >= sc.growth_day, sc.solar_capacity * sc.capacity_growth, sc.solar_capacity) \
        if sc.capacity_growth != 1.0 else np.full(n, sc.solar_capacity)
    shape = clear_sky(hours)
    solar_mu = solar_cap * 0.9 * shape * (1.0 - 0.75 * cloud)
    solar_sigma = solar_cap * shape * sc.solar_noise * (1.0 + sc.heteroscedastic * 16.0 * cloud * (1.0 - cloud))
    solar_truth = CensoredNormal(solar_mu, solar_sigma, 0.0, solar_cap)

    z_shared = rng.standard_normal(n)
    z_w = rng.standard_normal(n)
    z_s = rng.standard_normal(n)
    rho = sc.noise_correlation
    z_w = np.sqrt(1 - abs(rho)) * z_w + np.sqrt(abs(rho)) * z_shared
    z_s = np.sqrt(1 - abs(rho)) * z_s + np.sign(rho) * np.sqrt(abs(rho)) * z_shared
    wind_actual = wind_truth.transform(z_w[:, None])[:, 0]
    solar_actual = solar_truth.transform(z_s[:, None])[:, 0]

    spread_means = spread_profile(sc.spread_amplitude)
    period = np.arange(n) % PERIODS_PER_DAY
    spread = spread_means[period] + sc.spread_noise * rng.standard_normal(n)
    daily_level = sc.price_level + 8.0 * _ar1(rng, sc.days, 0.8)
    da = daily_level[day] + 15.0 * np.sin(2 * np.pi * (period - 12) / PERIODS_PER_DAY) \
        + 4.0 * rng.standard_normal(n)
    market = MarketSeries(timestamps, da, da - spread, wind_actual + solar_actual)

    weather = {}
    for name, src in sc.sources:
        src_rng = np.random.default_rng([sc.seed, len(weather) + 1])
        wf, sf = _nwp(src_rng, src, hourly_times, ws_h, cl_h, sc.days + 2)
        weather[("wind", name)] = wf
        weather[("solar", name)] = sf

    energy = {}
    for kind, actual in (("wind", wind_actual), ("solar", solar_actual)):
        target = actual.copy()
        if sc.missing_targets > 0:
            target[rng.random(n) < sc.missing_targets] = np.nan
        energy[kind] = pd.DataFrame({"timestamp": timestamps, "target": target})

    return SyntheticData(sc, timestamps, wind_truth, solar_truth, wind_actual, solar_actual, avail, solar_cap,
                         spread_means, weather, energy, market)
