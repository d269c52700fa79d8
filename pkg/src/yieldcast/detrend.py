"""Genetic-gain de-trending of historical yields.

Two schemes bring a past year's yield up to ``base_year`` terms:

* ``percentage``: compound growth, ``y * (1 + rate) ** (base_year - year)``
* ``constant``: add the per-year gains between ``year`` and ``base_year``;
  the step from y to y+1 gains 2.5 bu/ac when y < 2000 and 4.67 otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

GAIN_BREAK_YEAR = 2000


class TrendKind(str, enum.Enum):
    PERCENTAGE = "percentage"
    CONSTANT = "constant"


@dataclass(frozen=True)
class TrendModel:
    kind: TrendKind = TrendKind.PERCENTAGE
    base_year: int = 2013
    rate: float = 0.015
    gain_pre2000: float = 2.5
    gain_post2000: float = 4.67

    def __post_init__(self):
        object.__setattr__(self, "kind", TrendKind(self.kind))
        if not self.rate > 0:
            raise ConfigError(f"trend rate must be > 0, got {self.rate}", module="detrend")
        if not (self.gain_pre2000 > 0 and self.gain_post2000 > 0):
            raise ConfigError("genetic gains must be > 0", module="detrend")

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "base_year": self.base_year,
            "rate": self.rate,
            "gain_pre2000": self.gain_pre2000,
            "gain_post2000": self.gain_post2000,
        }

    @classmethod
    def from_description(cls, d: dict) -> "TrendModel":
        return cls(
            kind=TrendKind(d["kind"]),
            base_year=int(d["base_year"]),
            rate=float(d["rate"]),
            gain_pre2000=float(d["gain_pre2000"]),
            gain_post2000=float(d["gain_post2000"]),
        )


def _span(year: int, model: TrendModel) -> int:
    if year > model.base_year:
        raise DomainError(
            f"year {year} is after base year {model.base_year}; future years are not adjusted",
            module="detrend",
        )
    return model.base_year - year


def cumulative_gain(year: int, model: TrendModel) -> float:
    """Total constant-scheme gain accumulated from ``year`` up to ``base_year``."""
    _span(year, model)
    pre = max(0, min(model.base_year, GAIN_BREAK_YEAR) - year)
    post = max(0, model.base_year - max(year, GAIN_BREAK_YEAR))
    # count * gain rather than a running sum, so e.g. 1998 -> 2013 is exactly 65.71
    return pre * model.gain_pre2000 + post * model.gain_post2000


def adjust(yield_bu_ac, year: int, model: TrendModel):
    """Express a ``year`` yield in ``base_year`` terms. Works on scalars and arrays."""
    span = _span(year, model)
    if span == 0:
        return yield_bu_ac
    if model.kind is TrendKind.PERCENTAGE:
        return yield_bu_ac * (1.0 + model.rate) ** span
    return yield_bu_ac + cumulative_gain(year, model)


def invert(adjusted, year: int, model: TrendModel):
    """Inverse of :func:`adjust`: base-year terms back to the harvest year's own terms."""
    span = _span(year, model)
    if span == 0:
        return adjusted
    if model.kind is TrendKind.PERCENTAGE:
        return adjusted / (1.0 + model.rate) ** span
    return adjusted - cumulative_gain(year, model)


def adjust_many(yields, years, model: TrendModel) -> np.ndarray:
    return np.array([adjust(float(y), int(yr), model) for y, yr in zip(yields, years)])


def invert_many(adjusted, years, model: TrendModel) -> np.ndarray:
    return np.array([invert(float(a), int(yr), model) for a, yr in zip(adjusted, years)])
