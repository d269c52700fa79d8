"""Combination-sample augmentation within crop reporting districts (CRDs).

A combination sample averages the feature matrices and de-trended yields of
2 (or 3) counties from the same CRD in the same year. Its key joins the
sorted county ids with ``+``, e.g. ``"ADAIR+ADAMS"``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb

from .core import Sample
from .errors import CombinationError, ConfigError, CoverageError, PlanError

log = logging.getLogger(__name__)


class AugmentMode(str, enum.Enum):
    PAIRS = "pairs"
    PAIRS_AND_TRIPLES = "pairs3"

    @property
    def sizes(self) -> tuple[int, ...]:
        return (2,) if self is AugmentMode.PAIRS else (2, 3)


@dataclass(frozen=True)
class AugmentPlan:
    mode: AugmentMode
    crd_map: dict[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(self, "mode", AugmentMode(self.mode))
        seen: dict[str, str] = {}
        normalized = {}
        for crd in sorted(self.crd_map):
            members = tuple(sorted(set(self.crd_map[crd])))
            for county in members:
                if county in seen:
                    raise PlanError(
                        f"county {county} is in CRDs {seen[county]} and {crd}", value=county, module="augment"
                    )
                seen[county] = crd
            normalized[crd] = members
        object.__setattr__(self, "crd_map", normalized)

    @classmethod
    def parse(cls, mode: str, crd_map: dict[str, list[str]]) -> "AugmentPlan | None":
        """``mode`` as given on the command line; ``"none"`` disables augmentation."""
        if mode == "none":
            return None
        try:
            return cls(AugmentMode(mode), {k: tuple(v) for k, v in crd_map.items()})
        except ValueError:
            raise ConfigError(f"unknown augment mode {mode!r}; use none, pairs or pairs3", module="augment") from None

    def combos_per_year(self) -> int:
        return sum(comb(len(m), k) for m in self.crd_map.values() for k in self.mode.sizes)


def combination_key(counties) -> str:
    return "+".join(sorted(counties))


def enumerate_combos(plan: AugmentPlan) -> list[tuple[str, ...]]:
    """All within-CRD subsets of the plan's sizes, in (CRD, size, lexicographic) order."""
    out = []
    for crd, members in plan.crd_map.items():
        for k in plan.mode.sizes:
            out.extend(combinations(members, k))
    return out


def average_samples(samples: list[Sample]) -> Sample:
    if len(samples) not in (2, 3):
        raise CombinationError(f"can only average 2 or 3 samples, got {len(samples)}", module="augment")
    year = samples[0].year
    shape = samples[0].features.shape
    for s in samples[1:]:
        if s.year != year:
            raise CombinationError("samples from different years", value=(s.key, s.year), module="augment")
        if s.features.shape != shape:
            raise CombinationError("samples with different shapes", value=(s.key, s.features.shape),
                                   module="augment")
    # plain left-to-right sum then divide, so each cell is exactly (a + b [+ c]) / n
    total = samples[0].features
    target = samples[0].target_adjusted
    for s in samples[1:]:
        total = total + s.features
        target = target + s.target_adjusted
    n = len(samples)
    return Sample(combination_key(s.key for s in samples), year, total / n, target / n)


def augment_dataset(
    samples: list[Sample],
    plan: AugmentPlan | None,
    strict: bool = False,
    holdout: frozenset[tuple[str, int]] = frozenset(),
) -> list[Sample]:
    """Originals followed by every combination sample, year by year.

    A combination whose member county lacks a sample in that year is skipped
    with a warning, or raises :class:`CoverageError` when ``strict``.
    ``holdout`` lists (county, year) pairs reserved for validation: they are
    removed from the output and every combination touching one is dropped,
    which does not count as missing coverage.
    """
    for s in samples:
        if s.is_combination:
            raise CombinationError("input already contains combination samples", value=s.key, module="augment")
    out = [s for s in samples if (s.key, s.year) not in holdout]
    if plan is None:
        return out
    by_key = {(s.key, s.year): s for s in samples}
    combos = enumerate_combos(plan)
    skipped = held = 0
    for year in sorted({s.year for s in samples}):
        for combo in combos:
            members = [by_key.get((county, year)) for county in combo]
            if any(m is None for m in members):
                if strict:
                    missing = [c for c, m in zip(combo, members) if m is None]
                    raise CoverageError(
                        f"combination {combination_key(combo)} needs missing county-year samples {missing}",
                        value=year,
                        module="augment",
                    )
                skipped += 1
                continue
            if any((county, year) in holdout for county in combo):
                held += 1
                continue
            out.append(average_samples(members))
    if skipped:
        log.warning("skipped %d combinations with missing county-years", skipped)
    if held:
        log.info("dropped %d combinations touching held-out samples", held)
    log.info("augmented %d samples to %d", len(samples), len(out))
    return out


def expected_count(n_original: int, n_years: int, plan: AugmentPlan | None) -> int:
    """Size of a complete augmentation: originals plus combos for every year."""
    return n_original if plan is None else n_original + n_years * plan.combos_per_year()
