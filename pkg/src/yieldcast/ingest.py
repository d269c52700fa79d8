"""CSV ingestion, validation, and the synthetic dataset generator.

File schemas (UTF-8, comma separated, header row required)::

    weather.csv  county_id,date,hour,tmax_f,tmin_f,tmean_f,rain_in,rain_max_in,wind_mph
    yield.csv    county_id,year,yield_bu_ac
    soil.csv     county_id,crd_id,<14 soil attributes>,harvested_acres
    pdsi.csv     crd_id,year,month,pdsi
    crd_map.csv  county_id,crd_id

Weather rows with an empty ``hour`` are daily; rows with an hour 0-23 are
hourly and get collapsed to one day (max/min/mean temperature, summed rain,
max hourly rain, mean wind).
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from . import detrend
from .core import (
    SEASON_DAYS,
    SEASON_MONTHS,
    SOIL_ATTRIBUTES,
    WEATHER_FIELDS,
    CountyMeta,
    DailyWeather,
    PdsiSeries,
    RawDataset,
    WeatherSeason,
    YieldRecord,
    day_index,
    season_dates,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    DataError,
    DuplicateError,
    GapError,
    ParseError,
    PlanError,
    RangeError,
    SchemaError,
)
from .features import gdd

log = logging.getLogger(__name__)

WEATHER_COLUMNS = ("county_id", "date", "hour") + WEATHER_FIELDS
YIELD_COLUMNS = ("county_id", "year", "yield_bu_ac")
SOIL_COLUMNS = ("county_id", "crd_id") + SOIL_ATTRIBUTES + ("harvested_acres",)
PDSI_COLUMNS = ("crd_id", "year", "month", "pdsi")
CRD_MAP_COLUMNS = ("county_id", "crd_id")

STANDARD_FILES = {
    "weather": "weather.csv",
    "yield": "yield.csv",
    "soil": "soil.csv",
    "pdsi": "pdsi.csv",
    "crd_map": "crd_map.csv",
}

MAX_IMPUTE_GAP = 3


def _rows(path, required, optional=()):
    """Yield ``(row_number, dict)`` pairs; row 1 is the header."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file, header row required", file=path, module="ingest") from None
        for col in required:
            if col not in header:
                raise SchemaError(f"missing column {col!r}", file=path, row=1, value=col, module="ingest")
        index = {name: header.index(name) for name in (*required, *optional) if name in header}
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(raw)}", file=path, row=lineno, module="ingest"
                )
            yield lineno, {name: raw[i].strip() for name, i in index.items()}


def _num(text, path, row, name) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"non-numeric {name}", file=path, row=row, value=text, module="ingest") from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite {name}", file=path, row=row, value=text, module="ingest")
    return v


def _int(text, path, row, name) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"non-integer {name}", file=path, row=row, value=text, module="ingest") from None


def _check_day(day: DailyWeather, path, row) -> None:
    try:
        day.check()
    except DataError as exc:
        cls = type(exc)
        raise cls(
            str(exc.args[0]), file=path, row=row, value=exc.value, module="ingest"
        ) from None


def collapse_hourly(date: dt.date, hours: list[tuple[int, dict[str, float]]]) -> DailyWeather:
    """Collapse hourly observations of one day into a :class:`DailyWeather`.

    Hours are sorted and sums use ``math.fsum`` so the result does not depend
    on row order.
    """
    hours = sorted(hours, key=lambda h: h[0])
    vals = {f: [h[1][f] for h in hours] for f in WEATHER_FIELDS}
    n = len(hours)
    return DailyWeather(
        date=date,
        tmax_f=max(vals["tmax_f"]),
        tmin_f=min(vals["tmin_f"]),
        tmean_f=math.fsum(vals["tmean_f"]) / n,
        rain_in=math.fsum(vals["rain_in"]),
        rain_max_in=max(vals["rain_in"]),
        wind_mph=math.fsum(vals["wind_mph"]) / n,
    )


def _interpolate_gaps(days: dict[int, DailyWeather], county, year, path) -> None:
    present = sorted(days)
    dates = season_dates(year)
    missing = [i for i in range(SEASON_DAYS) if i not in days]
    runs: list[list[int]] = []
    for i in missing:
        if runs and runs[-1][-1] == i - 1:
            runs[-1].append(i)
        else:
            runs.append([i])
    for run in runs:
        lo, hi = run[0] - 1, run[-1] + 1
        if len(run) > MAX_IMPUTE_GAP or lo < 0 or hi >= SEASON_DAYS or not present:
            raise GapError(
                f"cannot impute gap of {len(run)} day(s) for county {county} year {year}",
                file=path,
                value=str(dates[run[0]]),
                module="ingest",
            )
        a, b = days[lo], days[hi]
        for i in run:
            w = (i - lo) / (hi - lo)
            vals = {f: (1 - w) * getattr(a, f) + w * getattr(b, f) for f in WEATHER_FIELDS}
            days[i] = DailyWeather(dates[i], **vals)
        log.warning(
            "IMPUTED %d missing weather day(s) for county %s from %s by linear interpolation",
            len(run),
            county,
            dates[run[0]],
        )


def parse_weather_csv(path, impute: str | None = None) -> dict[tuple[str, int], WeatherSeason]:
    """Parse daily or hourly weather into complete April-October seasons.

    ``impute="linear"`` fills interior gaps of at most three days; otherwise
    any missing day is a :class:`GapError`.
    """
    if impute not in (None, "none", "linear"):
        raise ConfigError(f"unknown impute mode {impute!r}", module="ingest")
    path = Path(path)
    daily: dict[tuple[str, int], dict[int, DailyWeather]] = defaultdict(dict)
    hourly: dict[tuple[str, dt.date], list] = defaultdict(list)
    first_row: dict[tuple[str, dt.date], int] = {}
    for row, rec in _rows(path, WEATHER_COLUMNS):
        try:
            date = dt.date.fromisoformat(rec["date"])
        except ValueError:
            raise ParseError("bad date", file=path, row=row, value=rec["date"], module="ingest") from None
        idx = day_index(date)
        if idx < 0:
            raise RangeError("date outside the April-October window", file=path, row=row, value=rec["date"],
                             module="ingest")
        vals = {f: _num(rec[f], path, row, f) for f in WEATHER_FIELDS}
        county = rec["county_id"]
        if rec["hour"] == "":
            key = (county, date.year)
            if idx in daily[key] or (county, date) in hourly:
                raise DuplicateError("duplicate weather day", file=path, row=row, value=(county, rec["date"]),
                                     module="ingest")
            day = DailyWeather(date, **vals)
            _check_day(day, path, row)
            daily[key][idx] = day
        else:
            hour = _int(rec["hour"], path, row, "hour")
            if not 0 <= hour <= 23:
                raise RangeError("hour must be 0-23", file=path, row=row, value=hour, module="ingest")
            if idx in daily.get((county, date.year), {}):
                raise DuplicateError("hourly rows for a day already given as daily", file=path, row=row,
                                     value=(county, rec["date"]), module="ingest")
            if any(h == hour for h, _ in hourly[(county, date)]):
                raise DuplicateError("duplicate hour", file=path, row=row, value=(county, rec["date"], hour),
                                     module="ingest")
            first_row.setdefault((county, date), row)
            hourly[(county, date)].append((hour, vals))
    for (county, date), hours in hourly.items():
        day = collapse_hourly(date, hours)
        if day.tmin_f > day.tmax_f:
            raise ConsistencyError("tmin > tmax after hourly collapse", file=path, row=first_row[(county, date)],
                                   value=(county, str(date)), module="ingest")
        _check_day(day, path, first_row[(county, date)])
        daily[(county, date.year)][day_index(date)] = day

    out = {}
    for (county, year) in sorted(daily):
        days = daily[(county, year)]
        if len(days) != SEASON_DAYS:
            if impute == "linear":
                _interpolate_gaps(days, county, year, path)
            else:
                dates = season_dates(year)
                missing = [str(dates[i]) for i in range(SEASON_DAYS) if i not in days]
                raise GapError(
                    f"county {county} year {year} is missing {len(missing)} day(s): {', '.join(missing[:10])}",
                    file=path,
                    value=missing[0],
                    module="ingest",
                )
        out[(county, year)] = WeatherSeason.from_days(year, [days[i] for i in range(SEASON_DAYS)])
    return out


def parse_yield_csv(path, year_range: tuple[int, int] | None = None) -> list[YieldRecord]:
    path = Path(path)
    seen: set[tuple[str, int]] = set()
    out = []
    for row, rec in _rows(path, YIELD_COLUMNS):
        year = _int(rec["year"], path, row, "year")
        value = _num(rec["yield_bu_ac"], path, row, "yield_bu_ac")
        key = (rec["county_id"], year)
        if key in seen:
            raise DuplicateError("duplicate (county, year)", file=path, row=row, value=key, module="ingest")
        if value <= 0:
            raise RangeError("yield must be > 0", file=path, row=row, value=value, module="ingest")
        if year_range is not None and not year_range[0] <= year <= year_range[1]:
            raise RangeError(f"year outside {year_range}", file=path, row=row, value=year, module="ingest")
        seen.add(key)
        out.append(YieldRecord(rec["county_id"], year, value))
    return out


def parse_soil_csv(path) -> dict[str, CountyMeta]:
    path = Path(path)
    out: dict[str, CountyMeta] = {}
    for row, rec in _rows(path, SOIL_COLUMNS[:-1], optional=("harvested_acres",)):
        county = rec["county_id"]
        if county in out:
            raise DuplicateError("duplicate county", file=path, row=row, value=county, module="ingest")
        soil = {a: _num(rec[a], path, row, a) for a in SOIL_ATTRIBUTES}
        acres_text = rec.get("harvested_acres", "")
        acres = _num(acres_text, path, row, "harvested_acres") if acres_text else None
        meta = CountyMeta(county, rec["crd_id"], soil, acres)
        try:
            meta.check()
        except DataError as exc:
            raise RangeError(exc.args[0], file=path, row=row, value=exc.value, module="ingest") from None
        out[county] = meta
    return out


def parse_pdsi_csv(path) -> dict[str, PdsiSeries]:
    path = Path(path)
    values: dict[str, dict[tuple[int, int], float]] = defaultdict(dict)
    for row, rec in _rows(path, PDSI_COLUMNS):
        year = _int(rec["year"], path, row, "year")
        month = _int(rec["month"], path, row, "month")
        v = _num(rec["pdsi"], path, row, "pdsi")
        if not 1 <= month <= 12:
            raise RangeError("month must be 1-12", file=path, row=row, value=month, module="ingest")
        if not -10.0 <= v <= 10.0:
            raise RangeError("PDSI must lie in [-10, 10]", file=path, row=row, value=v, module="ingest")
        if (year, month) in values[rec["crd_id"]]:
            raise DuplicateError("duplicate (crd, year, month)", file=path, row=row,
                                 value=(rec["crd_id"], year, month), module="ingest")
        values[rec["crd_id"]][(year, month)] = v
    out = {}
    for crd in sorted(values):
        for year in sorted({y for y, _ in values[crd]}):
            missing = [m for m in SEASON_MONTHS if (year, m) not in values[crd]]
            if missing:
                raise GapError(f"CRD {crd} year {year} missing months {missing}", file=path,
                               value=(crd, year), module="ingest")
        out[crd] = PdsiSeries(crd, dict(values[crd]))
    return out


def parse_crd_map_csv(path) -> dict[str, list[str]]:
    """``crd_id -> sorted county ids``; a county listed twice is a :class:`PlanError`."""
    path = Path(path)
    seen: dict[str, str] = {}
    for row, rec in _rows(path, CRD_MAP_COLUMNS):
        county = rec["county_id"]
        if county in seen and seen[county] != rec["crd_id"]:
            raise PlanError("county assigned to two CRDs", file=path, row=row, value=county, module="ingest")
        seen[county] = rec["crd_id"]
    out: dict[str, list[str]] = defaultdict(list)
    for county, crd in seen.items():
        out[crd].append(county)
    return {crd: sorted(c) for crd, c in sorted(out.items())}


def load_dataset(weather, yields, soil, pdsi, impute: str | None = None) -> RawDataset:
    raw = RawDataset(
        weather=parse_weather_csv(weather, impute=impute),
        yields=parse_yield_csv(yields),
        counties=parse_soil_csv(soil),
        pdsi=parse_pdsi_csv(pdsi),
    )
    raw.validate()
    return raw


# ---------------------------------------------------------------- writers


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def write_weather_csv(weather: dict[tuple[str, int], WeatherSeason], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_COLUMNS)
        for (county, year) in sorted(weather):
            season = weather[(county, year)]
            cols = [getattr(season, f) for f in WEATHER_FIELDS]
            for i, date in enumerate(season_dates(year)):
                w.writerow([county, date.isoformat(), ""] + [_fmt(c[i]) for c in cols])


def write_yield_csv(records: list[YieldRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(YIELD_COLUMNS)
        for r in records:
            w.writerow([r.county_id, r.year, _fmt(r.yield_bu_ac)])


def write_soil_csv(counties: dict[str, CountyMeta], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOIL_COLUMNS)
        for cid in sorted(counties):
            m = counties[cid]
            acres = "" if m.harvested_acres is None else _fmt(m.harvested_acres)
            w.writerow([cid, m.crd_id] + [_fmt(m.soil[a]) for a in SOIL_ATTRIBUTES] + [acres])


def write_pdsi_csv(pdsi: dict[str, PdsiSeries], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PDSI_COLUMNS)
        for crd in sorted(pdsi):
            for (year, month) in sorted(pdsi[crd].values):
                w.writerow([crd, year, month, _fmt(pdsi[crd].values[(year, month)])])


def write_crd_map_csv(crd_map: dict[str, list[str]], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CRD_MAP_COLUMNS)
        for crd in sorted(crd_map):
            for county in sorted(crd_map[crd]):
                w.writerow([county, crd])


def write_dataset(raw: RawDataset, directory) -> dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / v for k, v in STANDARD_FILES.items()}
    write_weather_csv(raw.weather, paths["weather"])
    write_yield_csv(raw.yields, paths["yield"])
    write_soil_csv(raw.counties, paths["soil"])
    write_pdsi_csv(raw.pdsi, paths["pdsi"])
    write_crd_map_csv(raw.crd_map(), paths["crd_map"])
    return paths


# ---------------------------------------------------------------- synthetic data


@dataclass(frozen=True)
class SynthConfig:
    """Layout and ground truth of a synthetic dataset.

    The yield of a county-year, in ``trend.base_year`` terms, is::

        intercept + gdd_coef * season GDD + rain_coef * season rain
            - heat_coef * (days with tmax > heat_threshold_f) + N(0, noise_sd)

    and the raw (harvest-year) yield is that value mapped back through
    ``detrend.invert``; with ``trend=None`` no trend is applied.
    """

    n_crds: int = 9
    counties_per_crd: int = 11
    crd_sizes: tuple[int, ...] | None = None
    start_year: int = 1980
    end_year: int = 2016
    intercept: float = 20.0
    gdd_coef: float = 0.05
    rain_coef: float = 1.5
    heat_coef: float = 1.0
    heat_threshold_f: float = 90.0
    noise_sd: float = 3.0
    trend: detrend.TrendModel | None = field(
        default_factory=lambda: detrend.TrendModel(detrend.TrendKind.CONSTANT, base_year=2016)
    )
    year_temp_sd: float = 2.5
    year_rain_sd: float = 0.25

    def sizes(self) -> tuple[int, ...]:
        return tuple(self.crd_sizes) if self.crd_sizes is not None else (self.counties_per_crd,) * self.n_crds

    def check(self) -> None:
        sizes = self.sizes()
        if not sizes or min(sizes) < 1:
            raise ConfigError("synthetic config needs at least one county per CRD", module="ingest")
        if self.end_year < self.start_year:
            raise ConfigError("synthetic config needs at least one year", module="ingest")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0", module="ingest")
        if self.trend is not None and self.trend.base_year < self.end_year:
            raise ConfigError("trend base_year must be >= end_year", module="ingest")


@dataclass(frozen=True)
class GroundTruth:
    intercept: float
    gdd_coef: float
    rain_coef: float
    heat_coef: float
    heat_threshold_f: float
    trend: detrend.TrendModel | None

    def season_value(self, season: WeatherSeason) -> float:
        """Noise-free base-year yield implied by one season of weather."""
        total_gdd = float(np.sum(gdd(season.tmax_f, season.tmin_f)))
        total_rain = float(np.sum(season.rain_in))
        heat_days = int(np.sum(season.tmax_f > self.heat_threshold_f))
        return self.intercept + self.gdd_coef * total_gdd + self.rain_coef * total_rain - self.heat_coef * heat_days


def _crd_name(i: int) -> str:
    return f"CRD{(i + 1) * 10:02d}"


def generate_synthetic(config: SynthConfig, seed: int) -> tuple[RawDataset, GroundTruth]:
    """Build a complete, internally consistent dataset from a seeded RNG.

    Weather is a seasonal temperature curve plus county, year and daily
    (AR(1)) perturbations; rain is an intermittent exponential process. Values
    are rounded to instrument-like precision before anything is derived from
    them, so a CSV round trip reproduces the dataset exactly.
    """
    config.check()
    rng = np.random.default_rng(seed)
    sizes = config.sizes()
    years = list(range(config.start_year, config.end_year + 1))
    truth = GroundTruth(
        config.intercept, config.gdd_coef, config.rain_coef, config.heat_coef, config.heat_threshold_f, config.trend
    )

    crd_of: dict[str, str] = {}
    for ci, size in enumerate(sizes):
        for k in range(size):
            crd_of[f"C{ci + 1}{k + 1:02d}"] = _crd_name(ci)
    county_ids = sorted(crd_of)
    crd_ids = sorted(set(crd_of.values()))

    counties = {}
    temp_offset = {}
    rain_scale = {}
    for cid in county_ids:
        sand = round(float(rng.uniform(5, 60)), 2)
        clay = round(float(rng.uniform(10, 40)), 2)
        soil = {
            "ffd": round(float(rng.uniform(140, 180)), 1),
            "sandtotal": sand,
            "silttotal": round(max(0.0, 100.0 - sand - clay), 2),
            "claytotal": clay,
            "om": round(float(rng.uniform(1, 6)), 2),
            "bulkDensity": round(float(rng.uniform(1.2, 1.6)), 3),
            "lep": round(float(rng.uniform(1, 6)), 2),
            "caco3": round(float(rng.uniform(0, 10)), 2),
            "ec": round(float(rng.uniform(0, 2)), 3),
            "soc0_150": round(float(rng.uniform(100, 300)), 1),
            "rootznaws": round(float(rng.uniform(150, 300)), 1),
            "droughty": float(rng.random() < 0.3),
            "sand": sand,
            "share_cropland": round(float(rng.uniform(0.3, 0.9)), 3),
        }
        acres = round(float(rng.uniform(50_000, 250_000)), 0)
        counties[cid] = CountyMeta(cid, crd_of[cid], soil, acres)
        temp_offset[cid] = float(rng.normal(0, 1.5))
        rain_scale[cid] = float(rng.uniform(0.85, 1.15))

    day = np.arange(SEASON_DAYS)
    seasonal = 52.0 + 24.0 * np.sin(np.pi * (day + 5) / (SEASON_DAYS + 10))

    weather = {}
    yields = []
    pdsi_vals: dict[str, dict[tuple[int, int], float]] = {crd: {} for crd in crd_ids}
    for year in years:
        year_temp = float(rng.normal(0, config.year_temp_sd))
        year_rain = float(np.exp(rng.normal(0, config.year_rain_sd)))
        crd_wet = {crd: float(rng.normal(0, 0.15)) for crd in crd_ids}
        for crd in crd_ids:
            level = float(rng.normal(0, 2.0)) + 4.0 * (np.log(year_rain) + crd_wet[crd])
            for m in SEASON_MONTHS:
                level = 0.7 * level + float(rng.normal(0, 1.0))
                pdsi_vals[crd][(year, m)] = round(float(np.clip(level, -10, 10)), 2)
        for cid in county_ids:
            ar = lfilter([1.0], [1.0, -0.6], rng.normal(0, 3.0, SEASON_DAYS))
            tmean = np.round(seasonal + temp_offset[cid] + year_temp + ar, 1)
            half = rng.uniform(7.0, 13.0, SEASON_DAYS)
            tmax = np.round(tmean + half, 1)
            tmin = np.round(tmean - half, 1)
            wet = rng.random(SEASON_DAYS) < 0.3
            mult = year_rain * rain_scale[cid] * float(np.exp(crd_wet[counties[cid].crd_id]))
            rain = np.round(np.where(wet, rng.exponential(0.35 * mult, SEASON_DAYS), 0.0), 2)
            rain_max = np.round(rain * rng.uniform(0.2, 1.0, SEASON_DAYS), 2)
            rain_max = np.minimum(rain_max, rain)
            wind = np.round(rng.gamma(4.0, 2.2, SEASON_DAYS), 1)
            season = WeatherSeason(year, tmax, tmin, tmean, rain, rain_max, wind)
            weather[(cid, year)] = season
            value = truth.season_value(season) + (float(rng.normal(0, config.noise_sd)) if config.noise_sd else 0.0)
            raw_yield = detrend.invert(value, year, config.trend) if config.trend is not None else value
            if raw_yield <= 0:
                raise ConfigError("synthetic ground truth produced a non-positive yield", module="ingest")
            yields.append(YieldRecord(cid, year, float(raw_yield)))

    pdsi = {crd: PdsiSeries(crd, pdsi_vals[crd]) for crd in crd_ids}
    yields.sort(key=lambda r: (r.county_id, r.year))
    raw = RawDataset(weather=weather, yields=yields, counties=counties, pdsi=pdsi)
    raw.validate()
    return raw, truth
