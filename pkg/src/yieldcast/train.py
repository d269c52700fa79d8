"""MSE loss, backpropagation through time, SGD training and random search."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Sample
from .errors import ConfigError, NumericError, ShapeError
from .lstm import (
    ForwardCache,
    Layer,
    LayerCache,
    LstmModel,
    ModelLayout,
    NormStats,
    forward,
    init_params,
    predict,
)

log = logging.getLogger(__name__)

VALIDATION_NOTE = "validation: seeded random 10% of original-county training samples; combinations train only"
TRIAL_COLUMNS = ("trial", "seed", "lr", "layers", "hidden", "dropout", "val_mse", "epochs", "wall_s")


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}", module="train")
    if pred.size == 0:
        raise ShapeError("mse of empty vectors", module="train")
    d = pred - target
    return float(np.mean(d * d))


# ---------------------------------------------------------------- gradients


def _layer_backward(layer: Layer, lc: LayerCache, dH: np.ndarray, cell: str, need_dx: bool):
    """Gradients of one layer given dL/dh_t for every t (``dH``, shape (T, B, H))."""
    T, B, H = dH.shape
    act = lc.act
    da = np.empty_like(act)
    dh_next = np.zeros((B, H))
    W = layer.W
    if cell == "rnn":
        deriv = 1.0 - act * act
        for t in range(T - 1, -1, -1):
            np.multiply(dH[t] + dh_next, deriv[t], out=da[t])
            dh_next = da[t] @ W
    else:
        H3 = 3 * H
        deriv = np.empty_like(act)
        sig = act[:, :, :H3]
        np.multiply(sig, 1.0 - sig, out=deriv[:, :, :H3])
        np.subtract(1.0, act[:, :, H3:] ** 2, out=deriv[:, :, H3:])
        c, tanh_c = lc.c, lc.tanh_c
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            at = act[t]
            i, f, o, g = at[:, :H], at[:, H : 2 * H], at[:, 2 * H : H3], at[:, H3:]
            dh = dH[t] + dh_next
            tc = tanh_c[t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dat = da[t]
            np.multiply(dc, g, out=dat[:, :H])
            np.multiply(dc, c[t], out=dat[:, H : 2 * H])
            np.multiply(dh, tc, out=dat[:, 2 * H : H3])
            np.multiply(dc, i, out=dat[:, H3:])
            dat *= deriv[t]
            dc_next = dc * f
            dh_next = dat @ W
    da_flat = da.reshape(T * B, -1)
    dU = da_flat.T @ lc.x.reshape(T * B, -1)
    dW = da_flat.T @ lc.h[:-1].reshape(T * B, H)
    db = da_flat.sum(axis=0)
    dX = (da_flat @ layer.U).reshape(T, B, -1) if need_dx else None
    return dU, dW, db, dX


def bptt(
    model: LstmModel,
    X: np.ndarray,
    y: np.ndarray,
    cache: ForwardCache | None = None,
    mode: str = "train",
    dropout_seed=None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch MSE and its exact gradient for every parameter block.

    Gradients accumulate over all timesteps since weights are shared across
    time. ``cache`` may come from a previous :func:`forward` call on ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if cache is None:
        pred, cache = forward(X, model, mode, dropout_seed)
    else:
        pred = cache.raw_out * model.norm.target_std + model.norm.target_mean
    pred = np.atleast_1d(pred)
    y = np.atleast_1d(y)
    loss = mse(pred, y)
    B = len(y)
    d_raw = (2.0 / B) * (pred - y) * model.norm.target_std

    grads: dict[str, np.ndarray] = {}
    grads["head.V"] = cache.h_out.T @ d_raw
    grads["head.b"] = np.array([d_raw.sum()])
    dh = np.outer(d_raw, model.V)
    n_layers = len(model.layers)
    dX = None
    for k in range(n_layers - 1, -1, -1):
        lc = cache.layers[k]
        mask = cache.masks[k]
        if k == n_layers - 1:
            dH = np.zeros_like(lc.h[1:])
            dH[-1] = dh if mask is None else dh * mask
        else:
            dH = dX if mask is None else dX * mask
        dU, dW, db, dX = _layer_backward(model.layers[k], lc, dH, model.cell, need_dx=k > 0)
        grads[f"layer{k}.U"] = dU
        grads[f"layer{k}.W"] = dW
        grads[f"layer{k}.b"] = db
    ordered = {name: grads[name] for name in model.params()}
    for name, g in ordered.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in block {name}", module="train")
    return loss, ordered


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def sgd_step(model: LstmModel, grads: dict[str, np.ndarray], lr: float, clip: float | None = 5.0) -> LstmModel:
    """``p <- p - lr * g`` after rescaling g to global norm ``clip`` if larger."""
    if not math.isfinite(lr) or lr < 0:
        raise ConfigError(f"learning rate must be finite and >= 0, got {lr}", module="train")
    params = model.params()
    if grads.keys() != params.keys():
        raise ShapeError("gradient blocks do not match model parameters", module="train")
    scale = lr
    if clip is not None:
        norm = global_norm(grads)
        if norm > clip:
            scale = lr * clip / norm
    new = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}", module="train")
        new[name] = p - scale * g
    return model.with_params(new)


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.01
    hidden_sizes: tuple[int, ...] = (32,)
    dropout_rate: float = 0.0
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 10
    seed: int = 0
    clip_norm: float = 5.0
    cell: str = "lstm"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    @property
    def layers(self) -> int:
        return len(self.hidden_sizes)

    def check(self) -> None:
        if not 1e-4 <= self.learning_rate <= 1e-1:
            raise ConfigError(f"learning_rate must lie in [1e-4, 1e-1], got {self.learning_rate}", module="train")
        if self.layers not in (1, 2):
            raise ConfigError(f"1 or 2 layers supported, got {self.layers}", module="train")
        if any(not 8 <= h <= 256 for h in self.hidden_sizes):
            raise ConfigError(f"hidden sizes must lie in [8, 256], got {self.hidden_sizes}", module="train")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ConfigError("dropout_rate must lie in [0, 0.5]", module="train")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ConfigError("batch_size and max_epochs must be >= 1, patience >= 0", module="train")

    def layout(self, n_features: int) -> ModelLayout:
        return ModelLayout(n_features, self.hidden_sizes, self.dropout_rate, self.cell)

    def describe(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "hidden_sizes": list(self.hidden_sizes),
            "dropout_rate": self.dropout_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "clip_norm": self.clip_norm,
            "cell": self.cell,
        }

    @classmethod
    def from_description(cls, d: dict) -> "Hyperparams":
        return cls(
            learning_rate=float(d["learning_rate"]),
            hidden_sizes=tuple(d["hidden_sizes"]),
            dropout_rate=float(d["dropout_rate"]),
            batch_size=int(d["batch_size"]),
            max_epochs=int(d["max_epochs"]),
            patience=int(d["patience"]),
            seed=int(d["seed"]),
            clip_norm=float(d["clip_norm"]),
            cell=str(d["cell"]),
        )


@dataclass(eq=False)
class DataSplit:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray

    def check(self) -> None:
        if len(self.y_train) == 0 or len(self.y_val) == 0:
            raise ConfigError("training and validation splits must be non-empty", module="train")
        if self.X_train.shape[0] != len(self.y_train) or self.X_val.shape[0] != len(self.y_val):
            raise ShapeError("features and targets disagree in length", module="train")


def split_samples(samples: list[Sample], val_fraction: float = 0.1, seed: int = 0) -> tuple[list[Sample], list[Sample]]:
    """Seeded random validation subset drawn from original (non-combination) samples only."""
    originals = [i for i, s in enumerate(samples) if not s.is_combination]
    if len(originals) < 2:
        raise ConfigError("need at least two original samples to split", module="train")
    n_val = max(1, int(round(val_fraction * len(originals))))
    rng = np.random.default_rng(seed)
    val_idx = set(int(i) for i in rng.choice(originals, size=n_val, replace=False))
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [samples[i] for i in sorted(val_idx)]
    return train, val


def stack(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.stack([s.features for s in samples]),
        np.array([s.target_adjusted for s in samples], dtype=np.float64),
    )


@dataclass(eq=False)
class TrainReport:
    train_mse: list[float]
    val_mse: list[float]
    best_epoch: int
    model: LstmModel
    wall_time: float = 0.0

    @property
    def best_val_mse(self) -> float:
        return self.val_mse[self.best_epoch]

    @property
    def epochs(self) -> int:
        return len(self.val_mse)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mse", "best"])
            for e, (tr, va) in enumerate(zip(self.train_mse, self.val_mse)):
                w.writerow([e, repr(tr), repr(va), int(e == self.best_epoch)])


def train_model(split: DataSplit, hp: Hyperparams) -> TrainReport:
    """Mini-batch SGD with seeded shuffling and early stopping on validation MSE.

    Training stops once validation MSE has failed to improve for more than
    ``patience`` consecutive epochs; the best-epoch model is returned. The
    optimised loss is the batch MSE divided by the training-target variance.
    """
    split.check()
    hp.check()
    start = time.perf_counter()
    X, y = split.X_train, split.y_train
    model = init_params(hp.layout(X.shape[1]), hp.seed)
    model.norm = NormStats.fit(X, y)
    loss_scale = 1.0 / model.norm.target_std**2
    n = len(y)
    train_hist: list[float] = []
    val_hist: list[float] = []
    best_model, best_val, best_epoch, stale = model, math.inf, 0, 0
    for epoch in range(hp.max_epochs):
        order = np.random.default_rng([hp.seed, epoch]).permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, hp.batch_size)):
            idx = order[lo : lo + hp.batch_size]
            loss, grads = bptt(model, X[idx], y[idx], mode="train", dropout_seed=[hp.seed, epoch, b])
            for g in grads.values():
                g *= loss_scale
            model = sgd_step(model, grads, hp.learning_rate, hp.clip_norm)
            total += loss * len(idx)
        train_hist.append(total / n)
        val = mse(predict(model, split.X_val), split.y_val)
        if not math.isfinite(val):
            raise NumericError(f"validation loss became non-finite at epoch {epoch}", module="train")
        val_hist.append(val)
        if val < best_val:
            best_model, best_val, best_epoch, stale = model, val, epoch, 0
        else:
            stale += 1
            if stale > hp.patience:
                break
        log.debug("epoch %d train %.4f val %.4f", epoch, train_hist[-1], val)
    return TrainReport(train_hist, val_hist, best_epoch, best_model, time.perf_counter() - start)


# ---------------------------------------------------------------- gradient check


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_block: str
    block_errors: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from dominating."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(
    layout: ModelLayout,
    seed: int = 0,
    eps: float = 1e-5,
    tolerance: float = 1e-5,
    n_samples: int = 2,
    time_len: int = 5,
    corrupt_block: str | None = None,
) -> GradCheckReport:
    """Compare :func:`bptt` against central differences on a random small problem.

    The analytic side runs in float64 as in training. The finite-difference
    side evaluates the loss in ``np.longdouble``: in float64 its rounding
    noise (about machine-eps * loss / eps) is itself near 1e-5 relative on
    gradient entries of order 1e-7, which would blur the comparison.
    ``corrupt_block`` perturbs that block's analytic gradient first, to show
    the check catches it.
    """
    model = init_params(layout, seed)
    if model.n_params() > 5000:
        raise ConfigError("grad_check is limited to models with <= 5000 parameters", module="train")
    rng = np.random.default_rng([seed, 1])
    # move biases off their init values so every gate is exercised
    for layer in model.layers:
        layer.b += rng.uniform(-0.5, 0.5, layer.b.shape)
    model.c += rng.uniform(-0.5, 0.5, 1)
    X = rng.normal(size=(n_samples, layout.n_features, time_len))
    y = rng.normal(size=n_samples)
    dseed = [seed, 2]
    _, grads = bptt(model, X, y, mode="train", dropout_seed=dseed)
    if corrupt_block is not None:
        grads[corrupt_block] = grads[corrupt_block] * 1.01 + 1e-3

    ext = model.with_params({k: v.astype(np.longdouble) for k, v in model.params().items()})
    X_ext = X.astype(np.longdouble)
    y_ext = y.astype(np.longdouble)

    def loss():
        d = np.atleast_1d(forward(X_ext, ext, "train", dseed)[0]) - y_ext
        return np.mean(d * d)

    step = np.longdouble(eps)
    errors = {}
    for name, p in ext.params().items():
        num = np.empty(p.shape)
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = loss()
            flat[i] = old - step
            down = loss()
            flat[i] = old
            num.reshape(-1)[i] = float((up - down) / (2 * step))
        errors[name] = float(np.max(relative_error(grads[name], num)))
    worst = max(errors, key=errors.get)
    return GradCheckReport(errors[worst], worst, errors, tolerance)


# ---------------------------------------------------------------- random search


@dataclass(frozen=True)
class SearchSpace:
    lr_range: tuple[float, float] = (1e-4, 1e-1)
    layer_choices: tuple[int, ...] = (1, 2)
    hidden_grid: tuple[int, ...] = (8, 16, 32, 64, 128, 256)
    dropout_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 10
    cell: str = "lstm"

    def check(self) -> None:
        if not self.layer_choices or not self.hidden_grid or not self.dropout_grid:
            raise ConfigError("every search dimension needs at least one value", module="train")
        lo, hi = self.lr_range
        if not 0 < lo <= hi:
            raise ConfigError(f"bad learning-rate range {self.lr_range}", module="train")

    def sample(self, rng: np.random.Generator) -> Hyperparams:
        lo, hi = self.lr_range
        lr = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        layers = int(rng.choice(self.layer_choices))
        hidden = tuple(int(rng.choice(self.hidden_grid)) for _ in range(layers))
        dropout = float(rng.choice(self.dropout_grid))
        seed = int(rng.integers(0, 2**31 - 1))
        return Hyperparams(lr, hidden, dropout, self.batch_size, self.max_epochs, self.patience, seed, cell=self.cell)


@dataclass
class TrialResult:
    trial: int
    hp: Hyperparams
    val_mse: float
    epochs: int
    wall_s: float
    report: TrainReport | None = field(default=None, repr=False)


@dataclass
class SearchResult:
    best: TrialResult
    trials: list[TrialResult]

    @property
    def best_hp(self) -> Hyperparams:
        return self.best.hp

    @property
    def best_report(self) -> TrainReport:
        return self.best.report


def _run_trial(args) -> TrialResult:
    trial, hp, split = args
    try:
        report = train_model(split, hp)
    except NumericError as exc:
        log.warning("trial %d diverged: %s", trial, exc)
        return TrialResult(trial, hp, math.inf, 0, 0.0)
    return TrialResult(trial, hp, report.best_val_mse, report.epochs, report.wall_time, report)


def sample_configs(space: SearchSpace, trials: int, seed: int) -> list[Hyperparams]:
    space.check()
    if trials < 1:
        raise ConfigError("trials must be >= 1", module="train")
    rng = np.random.default_rng(seed)
    return [space.sample(rng) for _ in range(trials)]


def random_search(
    space: SearchSpace,
    trials: int,
    seed: int,
    split: DataSplit,
    jobs: int = 1,
    log_path=None,
    record_wall_time: bool = False,
) -> SearchResult:
    """Train one model per sampled configuration and keep the lowest validation MSE.

    Configurations are drawn up front from ``seed``, so results do not
    depend on ``jobs``. Ties go to the earlier trial.
    """
    configs = sample_configs(space, trials, seed)
    work = [(i, hp, split) for i, hp in enumerate(configs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, work))
    else:
        results = []
        for w in work:
            results.append(_run_trial(w))
            r = results[-1]
            log.info("trial %d/%d val_mse %.4f (%d epochs)", r.trial + 1, trials, r.val_mse, r.epochs)
    best = min(results, key=lambda r: (r.val_mse, r.trial))
    if best.report is None:
        raise NumericError("every search trial diverged", module="train")
    if log_path is not None:
        write_trial_log(results, log_path, record_wall_time)
    return SearchResult(best, results)


def write_trial_log(results: Sequence[TrialResult], path, record_wall_time: bool = False) -> None:
    """Trial log CSV, one row per trial in trial order.

    ``wall_s`` is left empty unless ``record_wall_time`` since timings would
    make otherwise identical runs differ byte-wise.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {VALIDATION_NOTE}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in sorted(results, key=lambda r: r.trial):
            w.writerow(
                [
                    r.trial,
                    r.hp.seed,
                    repr(r.hp.learning_rate),
                    r.hp.layers,
                    "-".join(str(h) for h in r.hp.hidden_sizes),
                    repr(r.hp.dropout_rate),
                    repr(r.val_mse),
                    r.epochs,
                    f"{r.wall_s:.3f}" if record_wall_time else "",
                ]
            )


def read_trial_log(path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
