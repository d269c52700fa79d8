"""Domain types and the dense (sample, feature, day) tensor container."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConsistencyError, GapError, RangeError, ShapeError

SEASON_MONTHS = (4, 5, 6, 7, 8, 9, 10)
MONTH_DAYS = (30, 31, 30, 31, 31, 30, 31)
SEASON_DAYS = sum(MONTH_DAYS)  # 214, April 1 .. October 31
# index of the first day of each month on the April-1-origin axis
MONTH_STARTS = tuple(int(s) for s in np.cumsum((0,) + MONTH_DAYS[:-1]))
JULY = slice(MONTH_STARTS[3], MONTH_STARTS[4])  # day indices 91..121

# truncation lengths: end of July, August, September, October
MONTH_TO_T = {"aug": 122, "sep": 153, "oct": 183, "final": 214}
VALID_T = tuple(sorted(MONTH_TO_T.values()))

SOIL_ATTRIBUTES = (
    "ffd",
    "sandtotal",
    "silttotal",
    "claytotal",
    "om",
    "bulkDensity",
    "lep",
    "caco3",
    "ec",
    "soc0_150",
    "rootznaws",
    "droughty",
    "sand",
    "share_cropland",
)

WEATHER_FIELDS = ("tmax_f", "tmin_f", "tmean_f", "rain_in", "rain_max_in", "wind_mph")


def season_start(year: int) -> dt.date:
    return dt.date(year, 4, 1)


def season_dates(year: int) -> list[dt.date]:
    start = season_start(year)
    return [start + dt.timedelta(days=i) for i in range(SEASON_DAYS)]


def day_index(date: dt.date) -> int:
    """0-based position of ``date`` on its season axis; -1 outside Apr-Oct."""
    i = (date - season_start(date.year)).days
    return i if 0 <= i < SEASON_DAYS else -1


@dataclass(frozen=True)
class DailyWeather:
    date: dt.date
    tmax_f: float
    tmin_f: float
    tmean_f: float
    rain_in: float
    rain_max_in: float
    wind_mph: float

    def check(self) -> None:
        if not all(math.isfinite(getattr(self, f)) for f in WEATHER_FIELDS):
            raise RangeError("non-finite weather value", value=self, module="core")
        if not self.tmin_f <= self.tmean_f <= self.tmax_f:
            raise ConsistencyError(
                "temperatures must satisfy tmin <= tmean <= tmax",
                value=(self.tmin_f, self.tmean_f, self.tmax_f),
                module="core",
            )
        if self.rain_in < 0 or self.rain_max_in < 0 or self.wind_mph < 0:
            raise RangeError("negative rain or wind", value=self, module="core")
        if self.rain_max_in > self.rain_in:
            raise ConsistencyError(
                "max hourly rain exceeds daily total",
                value=(self.rain_max_in, self.rain_in),
                module="core",
            )


@dataclass(frozen=True, eq=False)
class WeatherSeason:
    """One county-year of daily weather, April 1 through October 31.

    Stored column-wise; indexing and iteration yield :class:`DailyWeather`.
    """

    year: int
    tmax_f: np.ndarray
    tmin_f: np.ndarray
    tmean_f: np.ndarray
    rain_in: np.ndarray
    rain_max_in: np.ndarray
    wind_mph: np.ndarray

    def __post_init__(self):
        for name in WEATHER_FIELDS:
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != (SEASON_DAYS,):
                raise ShapeError(
                    f"{name} must have {SEASON_DAYS} days, got shape {arr.shape}",
                    module="core",
                )
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_days(cls, year: int, days: list[DailyWeather]) -> "WeatherSeason":
        cols = {f: [getattr(d, f) for d in days] for f in WEATHER_FIELDS}
        return cls(year=year, **cols)

    def __len__(self) -> int:
        return SEASON_DAYS

    def __getitem__(self, i: int) -> DailyWeather:
        if i < 0:
            i += SEASON_DAYS
        date = season_start(self.year) + dt.timedelta(days=i)
        return DailyWeather(date, *(float(getattr(self, f)[i]) for f in WEATHER_FIELDS))

    def __iter__(self) -> Iterator[DailyWeather]:
        return (self[i] for i in range(SEASON_DAYS))

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeatherSeason):
            return NotImplemented
        return self.year == other.year and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in WEATHER_FIELDS
        )

    def check(self) -> None:
        """Vectorised form of :meth:`DailyWeather.check` over the whole season."""
        cols = np.stack([getattr(self, f) for f in WEATHER_FIELDS])
        ok = (
            np.isfinite(cols).all(axis=0)
            & (self.tmin_f <= self.tmean_f)
            & (self.tmean_f <= self.tmax_f)
            & (self.rain_in >= 0)
            & (self.rain_max_in >= 0)
            & (self.rain_max_in <= self.rain_in)
            & (self.wind_mph >= 0)
        )
        if not ok.all():
            self[int(np.argmin(ok))].check()


@dataclass(frozen=True)
class CountyMeta:
    county_id: str
    crd_id: str
    soil: dict[str, float]
    harvested_acres: float | None = None

    def check(self) -> None:
        missing = [a for a in SOIL_ATTRIBUTES if a not in self.soil]
        if missing:
            raise RangeError(f"missing soil attributes {missing}", value=self.county_id, module="core")
        for name, v in self.soil.items():
            if not math.isfinite(v):
                raise RangeError(f"non-finite soil attribute {name}", value=v, module="core")
        if not 0.0 <= self.soil["droughty"] <= 1.0:
            raise RangeError("droughty must lie in [0, 1]", value=self.soil["droughty"], module="core")
        if not 0.0 <= self.soil["share_cropland"] <= 1.0:
            raise RangeError(
                "share_cropland must lie in [0, 1]", value=self.soil["share_cropland"], module="core"
            )
        if self.soil["rootznaws"] < 0:
            raise RangeError("rootznaws must be >= 0", value=self.soil["rootznaws"], module="core")
        if self.harvested_acres is not None and not self.harvested_acres >= 0:
            raise RangeError("harvested_acres must be >= 0", value=self.harvested_acres, module="core")


@dataclass(frozen=True)
class PdsiSeries:
    crd_id: str
    values: dict[tuple[int, int], float]

    def season(self, year: int) -> list[float]:
        """April..October values for ``year``; raises GapError when incomplete."""
        missing = [m for m in SEASON_MONTHS if (year, m) not in self.values]
        if missing:
            raise GapError(
                f"PDSI for CRD {self.crd_id} year {year} missing months {missing}", module="core"
            )
        return [self.values[(year, m)] for m in SEASON_MONTHS]

    def years(self) -> list[int]:
        return sorted({y for y, _ in self.values})


@dataclass(frozen=True)
class YieldRecord:
    county_id: str
    year: int
    yield_bu_ac: float


@dataclass(frozen=True)
class RawDataset:
    weather: dict[tuple[str, int], WeatherSeason]
    yields: list[YieldRecord]
    counties: dict[str, CountyMeta]
    pdsi: dict[str, PdsiSeries]

    def validate(self) -> None:
        for rec in self.yields:
            if rec.county_id not in self.counties:
                raise ConsistencyError(
                    "yield record for county without soil metadata", value=rec.county_id, module="core"
                )
        for meta in self.counties.values():
            meta.check()
            if meta.crd_id not in self.pdsi:
                raise ConsistencyError("county's CRD has no PDSI series", value=meta.crd_id, module="core")
        for (county, year), season in self.weather.items():
            if season.year != year:
                raise ConsistencyError(
                    "weather season keyed under wrong year", value=(county, year), module="core"
                )
            season.check()

    def yield_lookup(self) -> dict[tuple[str, int], float]:
        return {(r.county_id, r.year): r.yield_bu_ac for r in self.yields}

    def crd_map(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for cid in sorted(self.counties):
            out.setdefault(self.counties[cid].crd_id, []).append(cid)
        return out


@dataclass(frozen=True, eq=False)
class Sample:
    key: str
    year: int
    features: np.ndarray  # (F, T)
    target_adjusted: float

    @property
    def is_combination(self) -> bool:
        return "+" in self.key

    def counties(self) -> list[str]:
        return self.key.split("+")


@dataclass(eq=False)
class FeatureTensor:
    """Dense (sample, feature, day) array, C-ordered so each sample's series are contiguous."""

    data: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"tensor data must be 3-D (n, f, t), got {self.data.shape}", module="core")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.features)]
        if len(self.feature_names) != self.features:
            raise ShapeError("feature_names length does not match F", module="core")

    @property
    def samples(self) -> int:
        return self.data.shape[0]

    @property
    def features(self) -> int:
        return self.data.shape[1]

    @property
    def time_len(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        """Logical (F, T, N) shape."""
        return (self.features, self.time_len, self.samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureTensor):
            return NotImplemented
        return self.feature_names == other.feature_names and np.array_equal(self.data, other.data)


def tensor_new(F: int, T: int, N: int) -> FeatureTensor:
    if min(F, T, N) < 1:
        raise ShapeError(f"all tensor dimensions must be >= 1, got F={F} T={T} N={N}", module="core")
    return FeatureTensor(np.zeros((N, F, T), dtype=np.float64))


def tensor_truncate_time(t: FeatureTensor, new_T: int) -> FeatureTensor:
    """Keep days ``[0, new_T)``. Cumulative features stay valid since they are prefix sums."""
    if new_T < 1 or new_T > t.time_len:
        raise ShapeError(f"cannot truncate T={t.time_len} to {new_T}", module="core")
    return FeatureTensor(np.ascontiguousarray(t.data[:, :, :new_T]), list(t.feature_names))
