"""Stacked many-to-one LSTM in NumPy.

Each layer stores its gate weights stacked row-wise in the order
input, forget, output, candidate::

    a_t = U x_t + W h_{t-1} + b            (4H,)
    i, f, o = sigmoid(a[:3H]);  g = tanh(a[3H:])
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

The head maps the last layer's final hidden state to one value,
``V . h_T + c``, which is then un-standardised with the target statistics.
Inputs are z-scored with per-feature statistics stored in the model.

``cell="rnn"`` swaps in the plain recurrence ``h_t = tanh(U x_t + W h_{t-1} + b)``;
it exists as a simpler reference for gradient tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericError, ShapeError

CELLS = {"lstm": 4, "rnn": 1}
GATES = ("i", "f", "o", "g")


@dataclass
class Layer:
    U: np.ndarray  # (G*H, F_in)
    W: np.ndarray  # (G*H, H)
    b: np.ndarray  # (G*H,)

    @property
    def hidden(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(U_g, W_g, b_g)`` views for one LSTM gate."""
        k = GATES.index(name)
        h = self.hidden
        rows = slice(k * h, (k + 1) * h)
        return self.U[rows], self.W[rows], self.b[rows]


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0

    @classmethod
    def identity(cls, n_features: int) -> "NormStats":
        return cls(np.zeros(n_features), np.ones(n_features))

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray | None = None) -> "NormStats":
        """Per-feature mean/std over samples and days; zero spreads become 1."""
        mean = X.mean(axis=(0, 2))
        std = X.std(axis=(0, 2))
        std = np.where(std > 0, std, 1.0)
        if y is None:
            return cls(mean, std)
        y_std = float(np.std(y))
        return cls(mean, std, float(np.mean(y)), y_std if y_std > 0 else 1.0)


@dataclass(frozen=True)
class ModelLayout:
    n_features: int
    hidden_sizes: tuple[int, ...]
    dropout_rate: float = 0.0
    cell: str = "lstm"

    def check(self) -> None:
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1", module="lstm")
        if len(self.hidden_sizes) not in (1, 2):
            raise ConfigError(f"1 or 2 layers supported, got {len(self.hidden_sizes)}", module="lstm")
        if min(self.hidden_sizes) < 1:
            raise ConfigError("hidden size must be >= 1", module="lstm")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ConfigError("dropout_rate must lie in [0, 0.5]", module="lstm")
        if self.cell not in CELLS:
            raise ConfigError(f"cell must be one of {sorted(CELLS)}", module="lstm")


@dataclass
class LstmModel:
    layers: list[Layer]
    V: np.ndarray  # (H_last,)
    c: np.ndarray  # (1,)
    norm: NormStats
    dropout_rate: float = 0.0
    cell: str = "lstm"

    @property
    def n_features(self) -> int:
        return self.layers[0].U.shape[1]

    @property
    def layout(self) -> ModelLayout:
        return ModelLayout(self.n_features, tuple(l.hidden for l in self.layers), self.dropout_rate, self.cell)

    def params(self) -> dict[str, np.ndarray]:
        """Named parameter blocks (live arrays, not copies)."""
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"layer{k}.U"] = layer.U
            out[f"layer{k}.W"] = layer.W
            out[f"layer{k}.b"] = layer.b
        out["head.V"] = self.V
        out["head.b"] = self.c
        return out

    def with_params(self, params: dict[str, np.ndarray]) -> "LstmModel":
        layers = [
            Layer(params[f"layer{k}.U"], params[f"layer{k}.W"], params[f"layer{k}.b"]) for k in range(len(self.layers))
        ]
        return replace(self, layers=layers, V=params["head.V"], c=params["head.b"])

    def copy(self) -> "LstmModel":
        norm = NormStats(self.norm.mean.copy(), self.norm.std.copy(), self.norm.target_mean, self.norm.target_std)
        return replace(self.with_params({k: v.copy() for k, v in self.params().items()}), norm=norm)

    def n_params(self) -> int:
        return sum(p.size for p in self.params().values())


def init_params(layout: ModelLayout, seed: int) -> LstmModel:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except forget gate = 1."""
    layout.check()
    rng = np.random.default_rng(seed)
    gates = CELLS[layout.cell]
    layers = []
    f_in = layout.n_features
    for h in layout.hidden_sizes:
        s = 1.0 / np.sqrt(h)
        U = rng.uniform(-s, s, (gates * h, f_in))
        W = rng.uniform(-s, s, (gates * h, h))
        b = np.zeros(gates * h)
        if layout.cell == "lstm":
            b[h : 2 * h] = 1.0
        layers.append(Layer(U, W, b))
        f_in = h
    h_last = layout.hidden_sizes[-1]
    V = rng.uniform(-1.0 / np.sqrt(h_last), 1.0 / np.sqrt(h_last), h_last)
    return LstmModel(layers, V, np.zeros(1), NormStats.identity(layout.n_features), layout.dropout_rate, layout.cell)


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(np.zeros(hidden), np.zeros(hidden))


def _sigmoid(a: np.ndarray, out: np.ndarray) -> np.ndarray:
    """1 / (1 + exp(-a)) into ``out``; faster than scipy's expit on small blocks."""
    with np.errstate(over="ignore"):
        np.negative(a, out=out)
        np.exp(out, out=out)
    out += 1.0
    return np.reciprocal(out, out=out)


def cell_step(x_t: np.ndarray, state: LstmState, layer: Layer) -> LstmState:
    """One LSTM update for a single sequence."""
    if not np.all(np.isfinite(x_t)):
        raise NumericError("non-finite input to cell_step", module="lstm")
    H = layer.hidden
    a = layer.U @ x_t + layer.W @ state.h + layer.b
    i, f, o = expit(a[:H]), expit(a[H : 2 * H]), expit(a[2 * H : 3 * H])
    g = np.tanh(a[3 * H :])
    c = f * state.c + i * g
    return LstmState(o * np.tanh(c), c)


def dropout_masks(model: LstmModel, batch: int, seed: int | None) -> list[np.ndarray | None]:
    """Per-sequence inverted-dropout masks, one per layer output."""
    p = model.dropout_rate
    if p == 0.0:
        return [None] * len(model.layers)
    rng = np.random.default_rng(seed)
    return [(rng.random((batch, layer.hidden)) >= p) / (1.0 - p) for layer in model.layers]


@dataclass
class LayerCache:
    x: np.ndarray  # (T, B, F_in) layer input
    h: np.ndarray  # (T+1, B, H), h[0] = 0
    act: np.ndarray  # (T, B, G*H) gate activations
    c: np.ndarray | None = None  # (T+1, B, H)
    tanh_c: np.ndarray | None = None  # (T, B, H)


@dataclass
class ForwardCache:
    layers: list[LayerCache]
    masks: list[np.ndarray | None]
    h_out: np.ndarray  # (B, H_last) after final mask
    raw_out: np.ndarray  # (B,) head output before un-standardising
    single: bool = field(default=False)


def _standardize(x: np.ndarray, model: LstmModel) -> np.ndarray:
    """(B, F, T) -> z-scored (T, B, F)."""
    z = (x - model.norm.mean[None, :, None]) / model.norm.std[None, :, None]
    return np.ascontiguousarray(z.transpose(2, 0, 1))


def _layer_forward(layer: Layer, x: np.ndarray, cell: str) -> LayerCache:
    T, B, _ = x.shape
    H = layer.hidden
    pre = (x.reshape(T * B, -1) @ layer.U.T + layer.b).reshape(T, B, -1)
    dt = pre.dtype
    h = np.zeros((T + 1, B, H), dtype=dt)
    act = np.empty_like(pre)
    WT = np.ascontiguousarray(layer.W.T)
    if cell == "rnn":
        for t in range(T):
            act[t] = np.tanh(pre[t] + h[t] @ WT)
            h[t + 1] = act[t]
        return LayerCache(x, h, act)
    c = np.zeros((T + 1, B, H), dtype=dt)
    tanh_c = np.empty((T, B, H), dtype=dt)
    H3 = 3 * H
    a = np.empty((B, 4 * H), dtype=dt)
    for t in range(T):
        np.matmul(h[t], WT, out=a)
        a += pre[t]
        at = act[t]
        _sigmoid(a[:, :H3], at[:, :H3])
        np.tanh(a[:, H3:], out=at[:, H3:])
        np.multiply(at[:, H : 2 * H], c[t], out=c[t + 1])
        c[t + 1] += at[:, :H] * at[:, H3:]
        np.tanh(c[t + 1], out=tanh_c[t])
        np.multiply(at[:, 2 * H : H3], tanh_c[t], out=h[t + 1])
    return LayerCache(x, h, act, c, tanh_c)


def forward(x: np.ndarray, model: LstmModel, mode: str = "infer", dropout_seed: int | None = None):
    """Run the model on one (F, T) sequence or a (B, F, T) batch.

    Returns ``(prediction, cache)``; prediction is a float for a single
    sequence, else a (B,) array. Dropout masks are drawn only in ``train``
    mode, from ``dropout_seed``. Computation runs in float64 unless ``x``
    is ``np.longdouble`` (used by the gradient check's reference side).
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be train or infer, got {mode!r}", module="lstm")
    x = np.asarray(x)
    if x.dtype != np.longdouble:
        x = x.astype(np.float64, copy=False)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != model.n_features:
        raise ShapeError(f"expected (B, {model.n_features}, T) input, got {x.shape}", module="lstm")
    if x.shape[2] == 0:
        raise ShapeError("sequence length T must be >= 1", module="lstm")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input sequence", module="lstm")
    B = x.shape[0]
    masks = dropout_masks(model, B, dropout_seed) if mode == "train" else [None] * len(model.layers)
    inp = _standardize(x, model)
    caches = []
    for layer, mask in zip(model.layers, masks):
        lc = _layer_forward(layer, inp, model.cell)
        caches.append(lc)
        inp = lc.h[1:] if mask is None else lc.h[1:] * mask
    h_out = caches[-1].h[-1] if masks[-1] is None else caches[-1].h[-1] * masks[-1]
    raw_out = h_out @ model.V + model.c[0]
    pred = raw_out * model.norm.target_std + model.norm.target_mean
    cache = ForwardCache(caches, masks, h_out, raw_out, single)
    if single:
        pred = pred[0] if pred.dtype == np.longdouble else float(pred[0])
    return pred, cache


def predict(model: LstmModel, X: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Inference-mode predictions for a (N, F, T) array, in chunks."""
    X = np.asarray(X)
    if X.shape[0] == 0:
        return np.zeros(0)
    return np.concatenate([forward(X[i : i + batch_size], model)[0] for i in range(0, X.shape[0], batch_size)])
