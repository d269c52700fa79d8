"""Daily feature engineering: GDD, accumulations, broadcasts, interactions.

Every feature is a length-214 vector on the April-1-origin day axis. Monthly
PDSI is repeated over the days of its month; soil attributes and July
summaries are constant over the season.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import detrend
from .core import (
    JULY,
    MONTH_DAYS,
    SEASON_DAYS,
    SOIL_ATTRIBUTES,
    CountyMeta,
    FeatureTensor,
    PdsiSeries,
    RawDataset,
    Sample,
    WeatherSeason,
)
from .errors import ConfigError, CoverageError, DomainError, ShapeError

log = logging.getLogger(__name__)

GDD_BASE_F = 50.0
GDD_CAP_F = 86.0


def gdd(tmax_f, tmin_f):
    """Growing degree days (°F-days) from daily max/min temperature.

    Max temperature is capped at 86°F, min temperature raised to 50°F, and the
    result floored at zero (a day colder than 50°F contributes nothing).
    """
    tmax = np.asarray(tmax_f, dtype=np.float64)
    tmin = np.asarray(tmin_f, dtype=np.float64)
    if np.any(tmin > tmax):
        raise DomainError("tmin exceeds tmax", module="features")
    out = np.maximum(0.0, (np.minimum(GDD_CAP_F, tmax) + np.maximum(GDD_BASE_F, tmin)) / 2.0 - GDD_BASE_F)
    return float(out) if out.ndim == 0 else out


def cumulative(series) -> np.ndarray:
    """Inclusive prefix sums."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        raise ShapeError("cumulative of an empty series", module="features")
    return np.cumsum(arr)


def broadcast_pdsi(series: PdsiSeries, year: int) -> np.ndarray:
    return np.repeat(np.asarray(series.season(year), dtype=np.float64), MONTH_DAYS)


def broadcast_constant(v: float) -> np.ndarray:
    if not math.isfinite(v):
        raise DomainError(f"cannot broadcast non-finite value {v}", module="features")
    return np.full(SEASON_DAYS, float(v))


def interaction(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"interaction length mismatch {a.shape} vs {b.shape}", module="features")
    return a * b


@dataclass(frozen=True)
class SeasonInputs:
    weather: WeatherSeason
    pdsi: np.ndarray
    meta: CountyMeta


FeatureFn = Callable[[SeasonInputs], np.ndarray]


def _soil(name: str) -> FeatureFn:
    return lambda s: broadcast_constant(s.meta.soil[name])


# all 28 candidate variables, in a fixed canonical order
REGISTRY: dict[str, FeatureFn] = {
    "tmax": lambda s: np.array(s.weather.tmax_f),
    "tmin": lambda s: np.array(s.weather.tmin_f),
    "tmean": lambda s: np.array(s.weather.tmean_f),
    "rain": lambda s: np.array(s.weather.rain_in),
    "wind": lambda s: np.array(s.weather.wind_mph),
    "rain_max": lambda s: np.array(s.weather.rain_max_in),
    "cum_rain": lambda s: cumulative(s.weather.rain_in),
    "cum_gdd": lambda s: cumulative(gdd(s.weather.tmax_f, s.weather.tmin_f)),
    "pdsi": lambda s: np.array(s.pdsi),
    **{name: _soil(name) for name in SOIL_ATTRIBUTES},
    "july_rain": lambda s: broadcast_constant(float(np.sum(s.weather.rain_in[JULY]))),
    "july_tmax": lambda s: broadcast_constant(float(np.mean(s.weather.tmax_f[JULY]))),
    # same source column as share_cropland (one acreage ratio is available)
    "acre_share": lambda s: broadcast_constant(s.meta.soil["share_cropland"]),
    "tmax_x_droughty": lambda s: interaction(s.weather.tmax_f, broadcast_constant(s.meta.soil["droughty"])),
    "tmax_x_pdsi": lambda s: interaction(s.weather.tmax_f, s.pdsi),
}

_EXCLUDED_SOIL = tuple(a for a in SOIL_ATTRIBUTES if a not in ("rootznaws", "droughty"))


@dataclass(frozen=True)
class FeatureSet:
    name: str
    generators: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.generators)) != len(self.generators):
            raise ConfigError(f"duplicate feature ids in {self.name}", module="features")
        unknown = [g for g in self.generators if g not in REGISTRY]
        if unknown:
            raise ConfigError(f"unknown feature ids {unknown}", module="features")

    def __len__(self) -> int:
        return len(self.generators)


FEATURE_SETS: dict[str, FeatureSet] = {
    fs.name: fs
    for fs in (
        FeatureSet(
            "best10",
            ("tmean", "tmax", "tmin", "rain", "wind", "pdsi", "rootznaws", "droughty", "cum_gdd", "cum_rain"),
        ),
        FeatureSet(
            "set15",
            (
                "tmean", "rain", "wind", "pdsi", "rootznaws", "droughty", "cum_gdd", "acre_share",
                "ffd", "claytotal", "om", "ec", "rain_max", "july_rain", "july_tmax",
            ),
        ),
        # every candidate except the twelve soil attributes other than rootznaws/droughty
        FeatureSet("set16", tuple(n for n in REGISTRY if n not in _EXCLUDED_SOIL)),
        FeatureSet("all28", tuple(REGISTRY)),
    )
}


def get_feature_set(name: str) -> FeatureSet:
    try:
        return FEATURE_SETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown feature set {name!r}; choose from {sorted(FEATURE_SETS)}", module="features"
        ) from None


def season_matrix(inputs: SeasonInputs, fs: FeatureSet) -> np.ndarray:
    return np.stack([REGISTRY[name](inputs) for name in fs.generators])


def build_samples(
    raw: RawDataset,
    trend: detrend.TrendModel | None,
    fs: FeatureSet,
    years: Iterable[int],
) -> list[Sample]:
    """One sample per (county, year) with a yield record, sorted by (county_id, year).

    Targets are de-trended with ``trend``; ``None`` keeps raw yields.
    """
    wanted = set(years)
    pdsi_cache: dict[tuple[str, int], np.ndarray] = {}
    out = []
    for rec in sorted(raw.yields, key=lambda r: (r.county_id, r.year)):
        if rec.year not in wanted:
            continue
        season = raw.weather.get((rec.county_id, rec.year))
        if season is None:
            raise CoverageError(
                "county-year has a yield but no weather", value=(rec.county_id, rec.year), module="features"
            )
        meta = raw.counties[rec.county_id]
        key = (meta.crd_id, rec.year)
        if key not in pdsi_cache:
            pdsi_cache[key] = broadcast_pdsi(raw.pdsi[meta.crd_id], rec.year)
        matrix = season_matrix(SeasonInputs(season, pdsi_cache[key], meta), fs)
        target = rec.yield_bu_ac if trend is None else detrend.adjust(rec.yield_bu_ac, rec.year, trend)
        out.append(Sample(rec.county_id, rec.year, matrix, float(target)))
    log.info("built %d samples with feature set %s", len(out), fs.name)
    return out


def to_tensor(samples: list[Sample], feature_names: list[str] | None = None) -> tuple[FeatureTensor, np.ndarray]:
    if not samples:
        raise ShapeError("no samples to assemble", module="features")
    shape = samples[0].features.shape
    for s in samples:
        if s.features.shape != shape:
            raise ShapeError(
                f"sample {s.key}/{s.year} has shape {s.features.shape}, expected {shape}", module="features"
            )
    data = np.stack([s.features for s in samples])
    data.flags.writeable = False
    targets = np.array([s.target_adjusted for s in samples], dtype=np.float64)
    return FeatureTensor(data, list(feature_names or [])), targets
