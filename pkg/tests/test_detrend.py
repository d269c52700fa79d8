import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yieldcast.detrend import TrendKind, TrendModel, adjust, adjust_many, cumulative_gain, invert, invert_many
from yieldcast.errors import ConfigError, DomainError

PCT = TrendModel(TrendKind.PERCENTAGE, base_year=2013)
CONST = TrendModel(TrendKind.CONSTANT, base_year=2013)


def test_zero_span_identity():
    for m in (PCT, CONST):
        assert adjust(150.0, 2013, m) == 150.0
        assert invert(150.0, 2013, m) == 150.0


def test_percentage_example():
    assert adjust(150.0, 2003, PCT) == pytest.approx(174.081124, abs=1e-6)
    assert adjust(150.0, 2003, PCT) == 150.0 * 1.015**10
    assert invert(adjust(150.0, 2003, PCT), 2003, PCT) == pytest.approx(150.0, abs=1e-9)


def test_constant_boundary_example():
    # 1998 and 1999 gain 2.5 each; 2000 through 2012 gain 4.67 each
    assert cumulative_gain(1998, CONST) == pytest.approx(2 * 2.5 + 13 * 4.67)
    assert adjust(150.0, 1998, CONST) == 215.71
    assert invert(215.71, 1998, CONST) == pytest.approx(150.0, abs=1e-12)


def test_gain_regimes_at_2000():
    m = TrendModel(TrendKind.CONSTANT, base_year=2001)
    assert adjust(100.0, 1999, m) - adjust(100.0, 2000, m) == pytest.approx(2.5)
    assert adjust(100.0, 2000, m) - adjust(100.0, 2001, m) == pytest.approx(4.67)


def test_future_year_rejected():
    for m in (PCT, CONST):
        with pytest.raises(DomainError):
            adjust(150.0, 2014, m)
        with pytest.raises(DomainError):
            invert(150.0, 2014, m)


def test_bad_parameters():
    with pytest.raises(ConfigError):
        TrendModel(rate=0.0)
    with pytest.raises(ConfigError):
        TrendModel(TrendKind.CONSTANT, gain_post2000=-1.0)
    with pytest.raises(ValueError):
        TrendModel("linear")


@given(st.floats(50, 250), st.integers(1980, 2013), st.sampled_from([PCT, CONST]))
def test_round_trip_property(y, year, m):
    assert abs(invert(adjust(y, year, m), year, m) - y) <= 1e-9 * max(1.0, y)


@given(st.floats(50, 250), st.integers(1980, 2012), st.sampled_from([PCT, CONST]))
def test_adjust_non_increasing_in_year(y, year, m):
    assert adjust(y, year, m) >= adjust(y, year + 1, m)


@given(st.floats(50, 250), st.integers(1980, 2013))
def test_base_year_shift(y, year):
    # moving the base from 2013 to 2015 is a common factor (percentage) or,
    # past 2000, a common offset (constant)
    p15 = TrendModel(TrendKind.PERCENTAGE, base_year=2015)
    assert adjust(y, year, p15) / adjust(y, year, PCT) == pytest.approx(1.015**2, rel=1e-12)
    c15 = TrendModel(TrendKind.CONSTANT, base_year=2015)
    assert adjust(y, year, c15) - adjust(y, year, CONST) == pytest.approx(2 * 4.67, rel=1e-12)


def test_vectorised_matches_scalar(rng):
    ys = rng.uniform(50, 250, 200)
    yrs = rng.integers(1980, 2014, 200)
    for m in (PCT, CONST):
        adj = adjust_many(ys, yrs, m)
        assert np.allclose(adj, [adjust(a, int(b), m) for a, b in zip(ys, yrs)], rtol=0, atol=1e-12)
        assert np.allclose(invert_many(adj, yrs, m), ys, rtol=0, atol=1e-9)


def test_describe_round_trip():
    for m in (PCT, CONST, TrendModel(TrendKind.CONSTANT, 2016, 0.02, 2.0, 5.0)):
        assert TrendModel.from_description(m.describe()) == m
    assert math.isclose(adjust(150.0, 2013, PCT), adjust(150.0, 2013, CONST))
