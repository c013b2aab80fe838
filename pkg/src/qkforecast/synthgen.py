"""Seeded synthetic regions: diurnal solar, persistent wind, and a mix of both.

Random numbers come from numpy's PCG64 bit generator.  Each channel gets its
own stream, derived as ``SeedSequence(seed, spawn_key=(channel,))``, so adding
a channel never shifts the draws of another and a seed reproduces the same
series on any platform running the same numpy stream version.

All constants below are fixed on purpose; only the seed and the length vary.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigError
from .timeseries import MINUTES_PER_HOUR, RegionSeries

REGION_KINDS = ("solar", "wind", "mixed")

# first generated hour: 2018-04-01T00:00Z
START_HOUR = int(datetime(2018, 4, 1, tzinfo=timezone.utc).timestamp()) // 3600

CLOUD_MEAN, CLOUD_PERSISTENCE, CLOUD_NOISE = 0.75, 0.9, 0.1
CLOUD_BOUNDS = (0.3, 1.0)
WIND_MEAN, WIND_PERSISTENCE, WIND_NOISE = 8.0, 0.98, 0.6
CUT_IN, RATED, CUT_OUT = 3.0, 12.0, 25.0
STORM_NOISE_SCALE = 2.0          # 2x innovation std -> 4x variance
P_CALM_TO_STORM, P_STORM_TO_CALM = 1 / 96, 1 / 48

BASE_COVARIATES = ("hour_sin", "hour_cos", "doy_sin", "doy_cos", "cloudiness", "wind_speed")
REGIME_COVARIATE = "regime"

# stream ids
_CLOUD, _WIND, _REGIME = 0, 1, 2


@dataclass(frozen=True)
class GenConfig:
    seed: int
    hours: int
    region_kind: str
    region_id: str | None = None

    def __post_init__(self):
        if self.region_kind not in REGION_KINDS:
            raise ConfigError(f"region_kind must be one of {REGION_KINDS}, got {self.region_kind!r}")
        if self.hours < 48:
            raise ConfigError(f"hours must be >= 48, got {self.hours}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")


def _stream(seed: int, channel: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(channel,))))


def _calendar(hours: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hour of day (0-23) and 1-based day of year for epoch hours."""
    hod = hours % 24
    days = hours // 24
    dt64 = days.astype("datetime64[D]")
    years = dt64.astype("datetime64[Y]")
    doy = (dt64 - years).astype(np.int64) + 1
    return hod.astype(float), doy.astype(float)


def diurnal_envelope(hod: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, np.sin(np.pi * (hod - 6.0) / 12.0))


def seasonal_amplitude(doy: np.ndarray) -> np.ndarray:
    return 0.75 + 0.25 * np.cos(2.0 * np.pi * (doy - 172.0) / 365.0)


def power_curve(w: np.ndarray) -> np.ndarray:
    """Cubic turbine curve between cut-in and rated speed, zero above cut-out."""
    w = np.asarray(w, dtype=float)
    y = np.clip(((w - CUT_IN) / (RATED - CUT_IN)) ** 3, 0.0, 1.0)
    y = np.where(w < CUT_IN, 0.0, y)
    return np.where(w > CUT_OUT, 0.0, y)


def _cloudiness(rng: np.random.Generator, m: int) -> np.ndarray:
    z = rng.standard_normal(m)
    c = np.empty(m)
    prev = CLOUD_MEAN
    lo, hi = CLOUD_BOUNDS
    for i in range(m):
        prev = min(hi, max(lo, CLOUD_MEAN + CLOUD_PERSISTENCE * (prev - CLOUD_MEAN)
                           + CLOUD_NOISE * z[i]))
        c[i] = prev
    return c


def _wind_speed(rng: np.random.Generator, m: int, noise_scale: np.ndarray | None = None) -> np.ndarray:
    z = rng.standard_normal(m)
    if noise_scale is not None:
        z = z * noise_scale
    w = np.empty(m)
    prev = WIND_MEAN
    for i in range(m):
        prev = max(0.0, WIND_MEAN + WIND_PERSISTENCE * (prev - WIND_MEAN) + WIND_NOISE * z[i])
        w[i] = prev
    return w


def _regimes(rng: np.random.Generator, m: int) -> np.ndarray:
    u = rng.random(m)
    state = np.empty(m)
    s = 0
    for i in range(m):
        if i:
            p = P_CALM_TO_STORM if s == 0 else P_STORM_TO_CALM
            if u[i] < p:
                s = 1 - s
        state[i] = s
    return state


def _base(cfg: GenConfig):
    hours = START_HOUR + np.arange(cfg.hours, dtype=np.int64)
    hod, doy = _calendar(hours)
    cal = np.column_stack([np.sin(2 * np.pi * hod / 24), np.cos(2 * np.pi * hod / 24),
                           np.sin(2 * np.pi * doy / 365), np.cos(2 * np.pi * doy / 365)])
    return hours, hod, doy, cal


def _solar_y(hod, doy, cloud):
    return np.clip(diurnal_envelope(hod) * seasonal_amplitude(doy) * cloud, 0.0, 1.0)


def _series(cfg, hours, y, x, names):
    return RegionSeries(cfg.region_id or cfg.region_kind, hours * MINUTES_PER_HOUR, y, x, names)


def gen_solar(cfg: GenConfig) -> RegionSeries:
    if cfg.region_kind != "solar":
        raise ConfigError("gen_solar needs region_kind='solar'")
    hours, hod, doy, cal = _base(cfg)
    cloud = _cloudiness(_stream(cfg.seed, _CLOUD), cfg.hours)
    wind = _wind_speed(_stream(cfg.seed, _WIND), cfg.hours)
    y = _solar_y(hod, doy, cloud)
    return _series(cfg, hours, y, np.column_stack([cal, cloud, wind]), BASE_COVARIATES)


def gen_wind(cfg: GenConfig) -> RegionSeries:
    if cfg.region_kind != "wind":
        raise ConfigError("gen_wind needs region_kind='wind'")
    hours, hod, doy, cal = _base(cfg)
    cloud = _cloudiness(_stream(cfg.seed, _CLOUD), cfg.hours)
    wind = _wind_speed(_stream(cfg.seed, _WIND), cfg.hours)
    return _series(cfg, hours, power_curve(wind), np.column_stack([cal, cloud, wind]),
                   BASE_COVARIATES)


def gen_mixed(cfg: GenConfig) -> RegionSeries:
    """Half solar, half wind, with calm/stormy regimes modulating the wind.

    The hidden regime (0 calm, 1 stormy) is stored as the ``regime`` covariate.
    """
    if cfg.region_kind != "mixed":
        raise ConfigError("gen_mixed needs region_kind='mixed'")
    hours, hod, doy, cal = _base(cfg)
    regime = _regimes(_stream(cfg.seed, _REGIME), cfg.hours)
    cloud = _cloudiness(_stream(cfg.seed, _CLOUD), cfg.hours)
    wind = _wind_speed(_stream(cfg.seed, _WIND), cfg.hours,
                       np.where(regime == 1, STORM_NOISE_SCALE, 1.0))
    y = np.clip(0.5 * _solar_y(hod, doy, cloud) + 0.5 * power_curve(wind), 0.0, 1.0)
    x = np.column_stack([cal, cloud, wind, regime])
    return _series(cfg, hours, y, x, BASE_COVARIATES + (REGIME_COVARIATE,))


def generate(cfg: GenConfig) -> RegionSeries:
    return {"solar": gen_solar, "wind": gen_wind, "mixed": gen_mixed}[cfg.region_kind](cfg)
