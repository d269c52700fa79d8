import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yieldcast.core import MONTH_STARTS, SOIL_ATTRIBUTES, PdsiSeries
from yieldcast.detrend import TrendKind, TrendModel, adjust
from yieldcast.errors import ConfigError, CoverageError, DomainError, ShapeError
from yieldcast.features import (
    FEATURE_SETS,
    REGISTRY,
    FeatureSet,
    broadcast_constant,
    broadcast_pdsi,
    build_samples,
    cumulative,
    gdd,
    get_feature_set,
    interaction,
    to_tensor,
)
from yieldcast.ingest import SynthConfig, generate_synthetic

TREND = TrendModel(TrendKind.CONSTANT, base_year=2016)


# ---------------------------------------------------------------- naive reference assembler


def naive_gdd(tmax, tmin):
    hi = tmax if tmax < 86 else 86.0
    lo = tmin if tmin > 50 else 50.0
    v = (hi + lo) / 2 - 50
    return v if v > 0 else 0.0


def naive_value(raw, county, year, name, t):
    """Feature ``name`` at day ``t`` computed with plain loops over the raw data."""
    season = raw.weather[(county, year)]
    meta = raw.counties[county]
    days = list(season)
    month_of_day = []
    for m, n in zip(range(4, 11), (30, 31, 30, 31, 31, 30, 31)):
        month_of_day += [m] * n
    pdsi_t = raw.pdsi[meta.crd_id].values[(year, month_of_day[t])]
    d = days[t]
    if name in ("tmax", "tmin", "tmean", "rain", "wind", "rain_max"):
        field = {"tmax": "tmax_f", "tmin": "tmin_f", "tmean": "tmean_f", "rain": "rain_in",
                 "wind": "wind_mph", "rain_max": "rain_max_in"}[name]
        return getattr(d, field)
    if name == "cum_rain":
        total = 0.0
        for k in range(t + 1):
            total += days[k].rain_in
        return total
    if name == "cum_gdd":
        total = 0.0
        for k in range(t + 1):
            total += naive_gdd(days[k].tmax_f, days[k].tmin_f)
        return total
    if name == "pdsi":
        return pdsi_t
    if name in SOIL_ATTRIBUTES:
        return meta.soil[name]
    if name == "acre_share":
        return meta.soil["share_cropland"]
    if name == "july_rain":
        return sum(x.rain_in for x in days if x.date.month == 7)
    if name == "july_tmax":
        july = [x.tmax_f for x in days if x.date.month == 7]
        return sum(july) / len(july)
    if name == "tmax_x_droughty":
        return d.tmax_f * meta.soil["droughty"]
    if name == "tmax_x_pdsi":
        return d.tmax_f * pdsi_t
    raise KeyError(name)


# ---------------------------------------------------------------- gdd


@pytest.mark.parametrize("tmax,tmin,expected", [(86, 50, 18.0), (50, 50, 0.0), (95, 70, 28.0), (45, 40, 0.0)])
def test_gdd_examples(tmax, tmin, expected):
    assert gdd(tmax, tmin) == expected


def test_gdd_rejects_inverted():
    with pytest.raises(DomainError):
        gdd(50, 60)


@given(st.floats(-40, 130), st.floats(-40, 130))
def test_gdd_bounds(a, b):
    tmin, tmax = min(a, b), max(a, b)
    v = gdd(tmax, tmin)
    assert v >= 0
    if tmin <= 86:
        assert v <= 36
    assert v == naive_gdd(tmax, tmin)


# ---------------------------------------------------------------- accumulations and broadcasts


def test_cumulative_examples():
    assert cumulative([1, 2, 3]).tolist() == [1, 3, 6]
    assert cumulative([0, 0, 0]).tolist() == [0, 0, 0]
    with pytest.raises(ShapeError):
        cumulative([])


@given(st.lists(st.floats(0, 100), min_size=1, max_size=214))
def test_cumulative_monotone_and_total(xs):
    c = cumulative(xs)
    assert np.all(np.diff(c) >= 0)
    assert c[-1] == pytest.approx(math.fsum(xs), rel=1e-12, abs=1e-9)


def test_cum_gdd_over_season_is_monotone(small_synth):
    raw, _ = small_synth
    s = next(iter(raw.weather.values()))
    c = cumulative(gdd(s.tmax_f, s.tmin_f))
    assert c.shape == (214,) and np.all(np.diff(c) >= 0)


def make_pdsi(values):
    return PdsiSeries("X", {(2013, m): v for m, v in zip(range(4, 11), values)})


def test_broadcast_pdsi():
    assert not broadcast_pdsi(make_pdsi([0.0] * 7), 2013).any()
    v = broadcast_pdsi(make_pdsi([-2, 1, 1, 1, 1, 1, 1]), 2013)
    assert v.shape == (214,)
    assert (v[:30] == -2).all() and (v[30:] == 1).all()
    steps = broadcast_pdsi(make_pdsi([1, 2, 3, 4, 5, 6, 7]), 2013)
    change = [0] + [t for t in range(1, 214) if steps[t] != steps[t - 1]]
    assert change == list(MONTH_STARTS) == [0, 30, 61, 91, 122, 153, 183]


def test_broadcast_constant():
    assert broadcast_constant(280.0).tolist() == [280.0] * 214
    assert not broadcast_constant(0.0).any()
    assert (broadcast_constant(1) == np.ones(214)).all()
    for bad in (math.nan, math.inf):
        with pytest.raises(DomainError):
            broadcast_constant(bad)


def test_interaction():
    tmax = np.linspace(60, 95, 214)
    assert not interaction(tmax, np.zeros(214)).any()
    assert (interaction(tmax, np.ones(214)) == tmax).all()
    assert (interaction(tmax, broadcast_constant(1.0)) == tmax).all()
    with pytest.raises(ShapeError):
        interaction(tmax, np.ones(213))


# ---------------------------------------------------------------- feature sets


def test_feature_set_definitions():
    assert len(REGISTRY) == 28
    assert FEATURE_SETS["best10"].generators == (
        "tmean", "tmax", "tmin", "rain", "wind", "pdsi", "rootznaws", "droughty", "cum_gdd", "cum_rain")
    assert [len(FEATURE_SETS[n]) for n in ("best10", "set15", "set16", "all28")] == [10, 15, 16, 28]
    set16 = set(FEATURE_SETS["set16"].generators)
    assert {"rootznaws", "droughty"} <= set16
    assert not set16 & (set(SOIL_ATTRIBUTES) - {"rootznaws", "droughty"})
    with pytest.raises(ConfigError):
        FeatureSet("dup", ("tmax", "tmax"))
    with pytest.raises(ConfigError):
        FeatureSet("bad", ("sunshine",))
    with pytest.raises(ConfigError):
        get_feature_set("best11")


# ---------------------------------------------------------------- samples and tensors


def test_build_samples_layout(small_synth):
    raw, _ = small_synth
    fs = get_feature_set("best10")
    samples = build_samples(raw, TREND, fs, range(2008, 2016))
    assert len(samples) == 12 * 8
    assert [(s.key, s.year) for s in samples] == sorted((s.key, s.year) for s in samples)
    assert all(s.features.shape == (10, 214) for s in samples)
    lookup = raw.yield_lookup()
    for s in samples[:5]:
        assert s.target_adjusted == adjust(lookup[(s.key, s.year)], s.year, TREND)
    again = build_samples(raw, TREND, fs, range(2008, 2016))
    assert all(np.array_equal(a.features, b.features) for a, b in zip(samples, again))


def test_one_county_one_year(small_synth):
    raw, _ = small_synth
    one = type(raw)(raw.weather, [raw.yields[0]], raw.counties, raw.pdsi)
    samples = build_samples(one, None, get_feature_set("best10"), [raw.yields[0].year])
    assert len(samples) == 1 and samples[0].target_adjusted == raw.yields[0].yield_bu_ac
    tensor, targets = to_tensor(samples)
    assert tensor.shape == (10, 214, 1)


def test_missing_weather_is_coverage_error(small_synth):
    raw, _ = small_synth
    key = (raw.yields[0].county_id, raw.yields[0].year)
    weather = {k: v for k, v in raw.weather.items() if k != key}
    broken = type(raw)(weather, raw.yields, raw.counties, raw.pdsi)
    with pytest.raises(CoverageError):
        build_samples(broken, None, get_feature_set("best10"), [key[1]])


def test_noiseless_targets_equal_truth():
    cfg = SynthConfig(n_crds=1, counties_per_crd=2, start_year=2014, end_year=2016, noise_sd=0.0)
    raw, truth = generate_synthetic(cfg, 5)
    for s in build_samples(raw, cfg.trend, get_feature_set("best10"), range(2014, 2017)):
        assert s.target_adjusted == pytest.approx(truth.season_value(raw.weather[(s.key, s.year)]), abs=1e-9)


def test_all28_matches_naive_assembler(small_synth, rng):
    raw, _ = small_synth
    fs = get_feature_set("all28")
    samples = build_samples(raw, None, fs, [2013, 2014])
    tensor, _ = to_tensor(samples, list(fs.generators))
    for _ in range(300):
        n = int(rng.integers(tensor.samples))
        f = int(rng.integers(tensor.features))
        t = int(rng.integers(214))
        expect = naive_value(raw, samples[n].key, samples[n].year, fs.generators[f], t)
        assert tensor.data[n, f, t] == pytest.approx(expect, rel=1e-12, abs=1e-9)


def test_to_tensor_errors():
    from yieldcast.core import Sample

    with pytest.raises(ShapeError):
        to_tensor([])
    with pytest.raises(ShapeError):
        to_tensor([Sample("A", 2000, np.zeros((2, 214)), 1.0), Sample("B", 2000, np.zeros((2, 122)), 1.0)])
