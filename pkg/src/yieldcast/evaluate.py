"""County error tables, state aggregation and comparison against USDA estimates.

Predictions arrive in de-trended (base-year) space and are re-trended to the
harvest year before county errors are computed; the MSE in adjusted space is
reported alongside so results can be compared in either space.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .detrend import TrendModel, invert
from .errors import ConsistencyError, DataError, JoinError, ParseError, SchemaError

log = logging.getLogger(__name__)

# Real-data reference results, kept for reporting only. None marks a diverged run.
REPORTED_EXPERIMENTS = (
    # (input variables, training samples, hidden layers, MSE)
    (10, 3267, 1, 255.404),
    (10, 70026, 1, 211.6265),
    (10, 3267, 2, 233.2547),
    (10, 70026, 2, 191.0535),
    (15, 70026, 2, 361.9132),
    (16, 70026, 2, None),
    (28, 70026, 2, None),
)
REPORTED_BEST_MSE = 191.0535
# year -> (percentage-trend model, constant-trend model) state predictions
REPORTED_STATE_PREDICTIONS = {
    2013: (171.33, 165.57),
    2014: (179.13, 184.13),
    2015: (192.22, 190.50),
    2016: (189.13, 195.45),
}

DECIMALS = 4
COUNTY_COLUMNS = ("key", "year", "pred", "actual", "abs_err")
STATE_COLUMNS = ("year", "pred", "actual", "usda")


@dataclass(frozen=True)
class CountyRow:
    key: str
    year: int
    predicted: float
    actual: float

    @property
    def abs_error(self) -> float:
        return abs(self.predicted - self.actual)


@dataclass(frozen=True)
class StateRow:
    year: int
    predicted: float
    actual: float
    usda: float | None = None


@dataclass(frozen=True)
class UsdaRow:
    year: int
    actual: float
    usda_nov: float


@dataclass(frozen=True)
class ComparisonRow:
    year: int
    actual: float
    usda: float
    model: float

    @property
    def usda_error(self) -> float:
        return self.usda - self.actual

    @property
    def model_error(self) -> float:
        return self.model - self.actual


@dataclass
class EvalReport:
    rows: list[CountyRow]
    state_rows: list[StateRow] = field(default_factory=list)
    weighting: str = "unweighted"
    comparisons: list[ComparisonRow] = field(default_factory=list)
    uncompared_years: list[int] = field(default_factory=list)
    mse_adjusted: float | None = None

    def mse(self) -> float:
        return _mse(self.rows)

    def mean_abs_error(self) -> float:
        return float(np.mean([r.abs_error for r in self.rows])) if self.rows else 0.0

    def mse_by_year(self) -> dict[int, float]:
        years = sorted({r.year for r in self.rows})
        return {y: _mse([r for r in self.rows if r.year == y]) for y in years}

    def check(self) -> None:
        """Jensen sanity check: MSE can never be below the squared mean absolute error."""
        if not self.rows:
            return
        mse, mae = self.mse(), self.mean_abs_error()
        if mse < mae * mae * (1.0 - 1e-12) - 1e-12:
            raise ConsistencyError(f"MSE {mse} below squared MAE {mae * mae}", module="evaluate")


def _mse(rows: list[CountyRow]) -> float:
    if not rows:
        return 0.0
    return float(np.mean([(r.predicted - r.actual) ** 2 for r in rows]))


def county_errors(preds: dict[tuple[str, int], float], actuals: dict[tuple[str, int], float]):
    """Rows sorted by (key, year) and their MSE; both maps must share the same keys."""
    if preds.keys() != actuals.keys():
        missing = sorted(set(actuals) - set(preds))[:5]
        extra = sorted(set(preds) - set(actuals))[:5]
        raise JoinError(
            f"prediction and actual keys differ (no prediction for {missing}, no actual for {extra})",
            module="evaluate",
        )
    rows = [CountyRow(k, y, float(preds[(k, y)]), float(actuals[(k, y)])) for k, y in sorted(preds)]
    return rows, _mse(rows)


def state_aggregate(rows: list[CountyRow], weights: dict[str, float] | None = None):
    """Per-year state value as a weighted mean of county predictions and actuals.

    Weights (harvested acres) are used only if every county in the rows has
    one and each year's weights sum to a positive number; otherwise the
    plain mean is used and a warning logged. Returns ``(state_rows, mode)``
    with mode ``"acres"`` or ``"unweighted"``.
    """
    mode = "unweighted"
    if weights:
        counties = {r.key for r in rows}
        missing = sorted(c for c in counties if weights.get(c) is None or not math.isfinite(weights[c]))
        if missing:
            log.warning("harvested acres missing for %d counties (e.g. %s); using unweighted mean",
                        len(missing), missing[0])
        elif any(weights[c] < 0 for c in counties):
            log.warning("negative harvested acres; using unweighted mean")
        else:
            mode = "acres"
    by_year: dict[int, list[CountyRow]] = {}
    for r in rows:
        by_year.setdefault(r.year, []).append(r)
    if mode == "acres" and any(sum(weights[r.key] for r in rs) <= 0 for rs in by_year.values()):
        log.warning("harvested acres sum to zero in some year; using unweighted mean")
        mode = "unweighted"
    out = []
    for year in sorted(by_year):
        rs = by_year[year]
        w = np.array([weights[r.key] for r in rs]) if mode == "acres" else np.ones(len(rs))
        pred = float(np.dot(w, [r.predicted for r in rs]) / w.sum())
        actual = float(np.dot(w, [r.actual for r in rs]) / w.sum())
        out.append(StateRow(year, pred, actual))
    return out, mode


def load_usda_reference(path=None) -> dict[int, UsdaRow]:
    """Read ``year,actual,usda_nov``; the bundled fixture when ``path`` is None."""
    if path is None:
        text = resources.files("yieldcast.data").joinpath("usda_reference.csv").read_text(encoding="utf-8")
        source = "usda_reference.csv"
    else:
        text = Path(path).read_text(encoding="utf-8")
        source = str(path)
    reader = csv.DictReader(text.splitlines())
    need = {"year", "actual", "usda_nov"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise SchemaError(f"USDA reference needs columns {sorted(need)}", file=source, module="evaluate")
    table = {}
    for i, rec in enumerate(reader, start=2):
        try:
            row = UsdaRow(int(rec["year"]), float(rec["actual"]), float(rec["usda_nov"]))
        except (TypeError, ValueError):
            raise ParseError("unparseable USDA reference row", file=source, row=i, module="evaluate") from None
        if row.year in table:
            raise DataError("duplicate year in USDA reference", file=source, row=i, value=row.year,
                            module="evaluate")
        table[row.year] = row
    return table


def usda_compare(state_preds: dict[int, float], reference: dict[int, UsdaRow]):
    """Signed errors of USDA and the model against the final yield; returns ``(rows, uncompared_years)``."""
    rows, uncompared = [], []
    for year in sorted(state_preds):
        ref = reference.get(year)
        if ref is None:
            uncompared.append(year)
            continue
        rows.append(ComparisonRow(year, ref.actual, ref.usda_nov, float(state_preds[year])))
    if uncompared:
        log.info("no USDA reference for years %s", uncompared)
    return rows, uncompared


def build_report(
    keys: list[str],
    years: list[int],
    pred_adjusted,
    actual_adjusted,
    trend: TrendModel | None,
    weights: dict[str, float] | None = None,
    reference: dict[int, UsdaRow] | None = None,
) -> EvalReport:
    """Assemble a full report from base-year predictions and targets.

    Both series are re-trended to their harvest years (when a trend is
    given) for the county rows; ``mse_adjusted`` keeps the base-year MSE.
    """
    pred_adjusted = np.asarray(pred_adjusted, dtype=np.float64)
    actual_adjusted = np.asarray(actual_adjusted, dtype=np.float64)
    if not (len(keys) == len(years) == len(pred_adjusted) == len(actual_adjusted)):
        raise JoinError("keys, years, predictions and actuals differ in length", module="evaluate")
    if trend is None:
        pred_raw, actual_raw = pred_adjusted, actual_adjusted
    else:
        pred_raw = np.array([invert(p, y, trend) for p, y in zip(pred_adjusted, years)])
        actual_raw = np.array([invert(a, y, trend) for a, y in zip(actual_adjusted, years)])
    preds = {(k, int(y)): float(p) for k, y, p in zip(keys, years, pred_raw)}
    actuals = {(k, int(y)): float(a) for k, y, a in zip(keys, years, actual_raw)}
    if len(preds) != len(keys):
        raise JoinError("duplicate (key, year) pairs", module="evaluate")
    rows, _ = county_errors(preds, actuals)
    state_rows, mode = state_aggregate(rows, weights)
    comparisons, uncompared = [], []
    if reference is not None:
        comparisons, uncompared = usda_compare({s.year: s.predicted for s in state_rows}, reference)
        state_rows = [
            StateRow(s.year, s.predicted, s.actual, reference[s.year].usda_nov if s.year in reference else None)
            for s in state_rows
        ]
    mse_adj = float(np.mean((pred_adjusted - actual_adjusted) ** 2)) if len(keys) else 0.0
    report = EvalReport(rows, state_rows, mode, comparisons, uncompared, mse_adj)
    report.check()
    return report


# ---------------------------------------------------------------- plot CSVs


def _f(v: float | None) -> str:
    return "" if v is None else f"{v:.{DECIMALS}f}"


def emit_plot_csv(report: EvalReport, directory) -> tuple[Path, Path]:
    """Write ``county.csv`` and ``state.csv`` with fixed 4-decimal formatting."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    county_path, state_path = d / "county.csv", d / "state.csv"
    with county_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COUNTY_COLUMNS)
        for r in sorted(report.rows, key=lambda r: (r.key, r.year)):
            w.writerow([r.key, r.year, _f(r.predicted), _f(r.actual), _f(r.abs_error)])
    with state_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATE_COLUMNS)
        for s in sorted(report.state_rows, key=lambda s: s.year):
            w.writerow([s.year, _f(s.predicted), _f(s.actual), _f(s.usda)])
    return county_path, state_path


def read_plot_csv(directory) -> tuple[list[CountyRow], list[StateRow]]:
    d = Path(directory)
    with (d / "county.csv").open(newline="", encoding="utf-8") as fh:
        rows = [CountyRow(r["key"], int(r["year"]), float(r["pred"]), float(r["actual"])) for r in csv.DictReader(fh)]
    with (d / "state.csv").open(newline="", encoding="utf-8") as fh:
        states = [
            StateRow(int(r["year"]), float(r["pred"]), float(r["actual"]), float(r["usda"]) if r["usda"] else None)
            for r in csv.DictReader(fh)
        ]
    return rows, states
