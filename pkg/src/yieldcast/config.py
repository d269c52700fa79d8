"""Flat ``key = value`` run configuration.

One file describes a whole experiment; command-line flags override single
keys. Lines starting with ``#`` are comments. Lists are comma separated and
year ranges are written ``first-last``. The resolved configuration is
hashed so that every artifact can be traced back to it.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .augment import AugmentMode
from .core import VALID_T
from .detrend import TrendKind, TrendModel
from .errors import ConfigError
from .features import FEATURE_SETS
from .train import Hyperparams, SearchSpace

CELLS = ("lstm", "rnn")


def _years(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("-")
    if not sep:
        raise ValueError("expected first-last")
    a, b = int(lo), int(hi)
    if a > b:
        raise ValueError("range is reversed")
    return a, b


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _fmt(v, type_name: str) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if type_name == "tuple[int, int]":
        return f"{v[0]}-{v[1]}"
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    # inputs; an empty path means "<data_dir>/<standard name>"
    data_dir: str = ""
    weather: str = ""
    yields: str = ""
    soil: str = ""
    pdsi: str = ""
    crd_map: str = ""
    usda: str = ""
    impute: str = "none"
    output_dir: str = "runs/default"
    # pipeline
    trend: str = "percentage"
    base_year: int = 2016
    trend_rate: float = 0.015
    features: str = "best10"
    augment: str = "none"
    augment_strict: bool = False
    time_len: int = 214
    train_years: tuple[int, int] = (1980, 2012)
    test_years: tuple[int, int] = (2013, 2016)
    val_fraction: float = 0.1
    seed: int = 0
    # single training run
    learning_rate: float = 0.01
    hidden: tuple[int, ...] = (32,)
    dropout: float = 0.0
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    clip_norm: float = 5.0
    cell: str = "lstm"
    # random search
    trials: int = 30
    search_lr: tuple[float, ...] = (1e-4, 1e-1)
    search_layers: tuple[int, ...] = (1, 2)
    search_hidden: tuple[int, ...] = (8, 16, 32, 64, 128, 256)
    search_dropout: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    search_max_epochs: int = 100
    search_patience: int = 10
    # synthetic data
    synth_seed: int = 0
    synth_crds: int = 9
    synth_counties: int = 11
    synth_years: tuple[int, int] = (1980, 2016)
    synth_noise_sd: float = 3.0

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        def bad(name, why):
            raise ConfigError(f"config field {name}: {why}", module="config")

        if self.trend not in [k.value for k in TrendKind]:
            bad("trend", f"must be one of {[k.value for k in TrendKind]}, got {self.trend!r}")
        if self.features not in FEATURE_SETS:
            bad("features", f"must be one of {sorted(FEATURE_SETS)}, got {self.features!r}")
        if self.augment != "none" and self.augment not in [m.value for m in AugmentMode]:
            bad("augment", f"must be none, pairs or pairs3, got {self.augment!r}")
        if self.time_len not in VALID_T:
            bad("time_len", f"must be one of {VALID_T}, got {self.time_len}")
        if self.impute not in ("none", "linear"):
            bad("impute", "must be none or linear")
        (a, b), (c, d) = self.train_years, self.test_years
        if not (b < c or d < a):
            bad("test_years", f"{c}-{d} overlaps train_years {a}-{b}")
        if self.base_year < max(b, d):
            bad("base_year", f"{self.base_year} is before the last modelled year {max(b, d)}")
        if not 0.0 < self.val_fraction < 1.0:
            bad("val_fraction", "must lie in (0, 1)")
        if self.cell not in CELLS:
            bad("cell", f"must be one of {CELLS}")
        if self.trials < 1:
            bad("trials", "must be >= 1")
        if self.search_max_epochs < 1 or self.search_patience < 0:
            bad("search_max_epochs", "search epochs must be >= 1 and patience >= 0")
        if len(self.search_lr) != 2:
            bad("search_lr", "needs exactly two values: low,high")
        if self.synth_years[0] > a or self.synth_years[1] < max(b, d):
            bad("synth_years", "must cover train_years and test_years")
        try:
            self.hyperparams().check()
        except ConfigError as exc:
            bad("hyperparameters", str(exc))

    # ---------------------------------------------------------------- views

    def path(self, name: str) -> Path:
        """Resolved input path for one of weather/yields/soil/pdsi/crd_map."""
        explicit = getattr(self, name)
        if explicit:
            return Path(explicit)
        base = Path(self.data_dir) if self.data_dir else Path(self.output_dir) / "data"
        return base / {"yields": "yield.csv"}.get(name, f"{name}.csv")

    def trend_model(self) -> TrendModel:
        return TrendModel(TrendKind(self.trend), self.base_year, self.trend_rate)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            self.learning_rate, self.hidden, self.dropout, self.batch_size,
            self.max_epochs, self.patience, self.seed, self.clip_norm, self.cell,
        )

    def search_space(self) -> SearchSpace:
        return SearchSpace(
            (self.search_lr[0], self.search_lr[1]), self.search_layers, self.search_hidden,
            self.search_dropout, self.batch_size, self.search_max_epochs, self.search_patience, self.cell,
        )

    def year_list(self, which: str) -> list[int]:
        lo, hi = getattr(self, which)
        return list(range(lo, hi + 1))

    # ---------------------------------------------------------------- text form

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name), f.type)}\n" for f in fields(self))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        return dataclasses.replace(self, **_parse_values(overrides))


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": _bool,
    "tuple[int, int]": _years,
    "tuple[int, ...]": _ints,
    "tuple[float, ...]": _floats,
}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_values(raw: dict[str, str]) -> dict:
    out = {}
    for key, text in raw.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}", module="config")
        try:
            out[key] = _PARSERS[_FIELD_TYPES[key]](text.strip())
        except ValueError as exc:
            raise ConfigError(f"config field {key}: cannot parse {text!r} ({exc})", module="config") from None
    return out


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value", module="config")
        key = key.strip()
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: key {key!r} given twice", module="config")
        raw[key] = value.strip()
    return raw


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the file (if any), then the overrides."""
    raw: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}", module="config") from None
        raw = parse_config_text(text, str(path))
    raw.update(overrides or {})
    return RunConfig(**_parse_values(raw))
