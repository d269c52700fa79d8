"""mRMR ranking and correlation pruning over per-sample feature summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FeatureTensor
from .errors import ConfigError, ShapeError

MIN_SAMPLES = 30
DEFAULT_BINS = 10

_SUMMARIES = {
    "mean": lambda d: d.mean(axis=2),
    "sum": lambda d: d.sum(axis=2),
    "max": lambda d: d.max(axis=2),
}


@dataclass(frozen=True, eq=False)
class FeatureSummary:
    values: np.ndarray  # (N, F)
    names: list[str]
    target: np.ndarray  # (N,)

    def __post_init__(self):
        n, f = self.values.shape
        if len(self.names) != f or self.target.shape != (n,):
            raise ShapeError("summary, names and target disagree in shape", module="select")
        if n < MIN_SAMPLES:
            raise ConfigError(f"feature selection needs at least {MIN_SAMPLES} samples, got {n}", module="select")
        if not np.isfinite(self.values).all():
            raise ShapeError("non-finite summary values", module="select")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def default_bins(self) -> int:
        return max(2, min(DEFAULT_BINS, math.isqrt(len(self.target))))


def summarize(tensor: FeatureTensor, targets: np.ndarray, how: str = "mean") -> FeatureSummary:
    """Collapse each sample's series to one scalar per feature (season mean by default)."""
    try:
        fn = _SUMMARIES[how]
    except KeyError:
        raise ConfigError(f"unknown summary {how!r}", module="select") from None
    return FeatureSummary(fn(tensor.data), list(tensor.feature_names), np.asarray(targets, dtype=np.float64))


def equal_frequency_bins(x: np.ndarray, bins: int) -> np.ndarray:
    """Bin index per value by rank; tied values share a bin.

    A value's bin is ``floor(bins * (#values strictly smaller) / N)``, so with
    distinct values and ``bins | N`` every bin holds exactly ``N / bins`` values.
    """
    x = np.asarray(x, dtype=np.float64)
    below = np.searchsorted(np.sort(x), x, side="left")
    return (below * bins) // len(x)


def mutual_information(x, y, bins: int = DEFAULT_BINS) -> float:
    """Histogram estimate of I(x; y) in nats using equal-frequency bins."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("x and y must be equal-length vectors", module="select")
    if bins < 2:
        raise ConfigError("bins must be >= 2", module="select")
    n = len(x)
    if n < bins * bins:
        raise ConfigError(f"need N >= bins^2 = {bins * bins} samples, got {n}", module="select")
    bx = equal_frequency_bins(x, bins)
    by = equal_frequency_bins(y, bins)
    joint = np.bincount(bx * bins + by, minlength=bins * bins).reshape(bins, bins) / n
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    outer = np.outer(px, py)
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return max(mi, 0.0)


def relevance(summary: FeatureSummary, bins: int | None = None) -> dict[str, float]:
    bins = bins or summary.default_bins()
    return {name: mutual_information(summary.values[:, j], summary.target, bins) for j, name in enumerate(summary.names)}


def mrmr_rank(summary: FeatureSummary, k: int, bins: int | None = None) -> list[tuple[str, float]]:
    """Greedy max-relevance, min-redundancy ordering of ``k`` features.

    Returns ``(name, score)`` pairs; the first score is the relevance
    I(f; y), later ones the relevance minus the mean MI with features already
    picked. Exact ties go to the alphabetically first name.
    """
    if k < 0 or k > len(summary.names):
        raise ConfigError(f"k must be in [0, {len(summary.names)}], got {k}", module="select")
    bins = bins or summary.default_bins()
    rel = relevance(summary, bins)
    cols = {name: summary.values[:, j] for j, name in enumerate(summary.names)}
    pair_mi: dict[tuple[str, str], float] = {}

    def mi(a: str, b: str) -> float:
        key = (a, b) if a <= b else (b, a)
        if key not in pair_mi:
            pair_mi[key] = mutual_information(cols[key[0]], cols[key[1]], bins)
        return pair_mi[key]

    chosen: list[tuple[str, float]] = []
    remaining = sorted(summary.names)
    while len(chosen) < k:
        best_name, best_score = None, -math.inf
        for name in remaining:
            if chosen:
                score = rel[name] - sum(mi(name, s) for s, _ in chosen) / len(chosen)
            else:
                score = rel[name]
            if score > best_score:
                best_name, best_score = name, score
        chosen.append((best_name, best_score))
        remaining.remove(best_name)
    return chosen


def correlation_prune(summary: FeatureSummary, threshold: float = 0.9, bins: int | None = None) -> list[str]:
    """Drop every feature that has a more relevant partner with |Pearson r| > threshold.

    Relevance ties are broken by name (the alphabetically later one is
    dropped). Survivors keep the summary's column order.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigError("threshold must lie in (0, 1)", module="select")
    rel = relevance(summary, bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.corrcoef(summary.values, rowvar=False)
    r = np.nan_to_num(np.atleast_2d(r), nan=0.0)
    names = summary.names
    rank = {name: (-rel[name], name) for name in names}
    dropped = set()
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            if abs(r[i, j]) > threshold:
                loser = names[i] if rank[names[i]] > rank[names[j]] else names[j]
                dropped.add(loser)
    return [n for n in names if n not in dropped]


def write_ranking_csv(ranking: list[tuple[str, float]], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "score"])
        for i, (name, score) in enumerate(ranking, start=1):
            w.writerow([i, name, f"{score:.6f}"])
