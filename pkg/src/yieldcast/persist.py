"""Binary model checkpoints (``.yldc``) and a sample cache in the same block format.

A file is a fixed preamble, a JSON header and a sequence of named blocks::

    magic   4 bytes   b"YLDC" (checkpoint) or b"YLDS" (sample cache)
    version u16 LE
    hlen    u32 LE    length of the header in bytes
    header  hlen      UTF-8 JSON, sorted keys, no whitespace
    nblk    u32 LE
    block*            u16 name length, name (ASCII), u8 ndim, ndim x u32 dims,
                      prod(dims) little-endian float64 values

The header carries everything that is not a float array (layout, trend,
feature set, hyperparameters), so a checkpoint is enough to predict on its
own. Files are written to a temporary sibling and renamed into place.
See ``docs/checkpoint_format.md`` for a worked byte listing.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Sample
from .detrend import TrendModel
from .errors import (
    CheckpointError,
    MagicError,
    ShapeMismatchError,
    TruncationError,
    VersionError,
)
from .features import FeatureSet
from .lstm import Layer, LstmModel, ModelLayout, NormStats
from .train import Hyperparams

MODEL_MAGIC = b"YLDC"
CACHE_MAGIC = b"YLDS"
FORMAT_VERSION = 1
_F64 = np.dtype("<f8")


# ---------------------------------------------------------------- low-level blocks


def _encode(magic: bytes, header: dict, blocks: dict[str, np.ndarray]) -> bytes:
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [magic, struct.pack("<HI", FORMAT_VERSION, len(head)), head, struct.pack("<I", len(blocks))]
    for name, arr in blocks.items():
        arr = np.asarray(arr, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise CheckpointError(f"block {name} holds non-finite values")
        raw = name.encode("ascii")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype(_F64, copy=False).tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncationError(f"{self.path}: file ends inside {what} at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _decode(data: bytes, magic: bytes, path) -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(data, path)
    got = r.take(4, "magic")
    if got != magic:
        raise MagicError(f"{path}: bad magic {got!r}, expected {magic!r}")
    (version,) = r.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported format version {version} (this build reads {FORMAT_VERSION})")
    (hlen,) = r.unpack("<I", "header length")
    try:
        header = json.loads(r.take(hlen, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from None
    (nblk,) = r.unpack("<I", "block count")
    blocks: dict[str, np.ndarray] = {}
    for _ in range(nblk):
        (nlen,) = r.unpack("<H", "block name length")
        name = r.take(nlen, "block name").decode("ascii")
        (ndim,) = r.unpack("<B", f"block {name} rank")
        shape = r.unpack(f"<{ndim}I", f"block {name} shape")
        count = int(np.prod(shape, dtype=np.int64))
        raw = r.take(count * 8, f"block {name} data")
        blocks[name] = np.frombuffer(raw, dtype=_F64).astype(np.float64).reshape(shape)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes after last block")
    return header, blocks


def _atomic_write(data: bytes, path) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.chmod(tmp, 0o644)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise CheckpointError(f"cannot write {path}: {exc.strerror or exc}") from None


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------- model checkpoints


@dataclass
class Checkpoint:
    model: LstmModel
    trend: TrendModel
    feature_set: FeatureSet
    hyperparams: Hyperparams | None = None
    time_len: int | None = None


def _expected_shapes(layout: ModelLayout) -> dict[str, tuple[int, ...]]:
    gates = 4 if layout.cell == "lstm" else 1
    shapes = {}
    f_in = layout.n_features
    for k, h in enumerate(layout.hidden_sizes):
        shapes[f"layer{k}.U"] = (gates * h, f_in)
        shapes[f"layer{k}.W"] = (gates * h, h)
        shapes[f"layer{k}.b"] = (gates * h,)
        f_in = h
    shapes["head.V"] = (layout.hidden_sizes[-1],)
    shapes["head.b"] = (1,)
    shapes["norm.mean"] = (layout.n_features,)
    shapes["norm.std"] = (layout.n_features,)
    shapes["norm.target"] = (2,)
    return shapes


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    m = ckpt.model
    layout = m.layout
    if len(ckpt.feature_set) != layout.n_features:
        raise ShapeMismatchError(
            f"feature set {ckpt.feature_set.name} has {len(ckpt.feature_set)} features, model expects {layout.n_features}"
        )
    header = {
        "kind": "model",
        "layout": {
            "n_features": layout.n_features,
            "hidden_sizes": list(layout.hidden_sizes),
            "dropout_rate": layout.dropout_rate,
            "cell": layout.cell,
        },
        "feature_set": {"name": ckpt.feature_set.name, "generators": list(ckpt.feature_set.generators)},
        "trend": ckpt.trend.describe(),
        "hyperparams": None if ckpt.hyperparams is None else ckpt.hyperparams.describe(),
        "time_len": ckpt.time_len,
    }
    blocks = dict(m.params())
    blocks["norm.mean"] = m.norm.mean
    blocks["norm.std"] = m.norm.std
    blocks["norm.target"] = np.array([m.norm.target_mean, m.norm.target_std])
    return _encode(MODEL_MAGIC, header, blocks)


def decode_checkpoint(data: bytes, path="<bytes>") -> Checkpoint:
    header, blocks = _decode(data, MODEL_MAGIC, path)
    try:
        lay = header["layout"]
        layout = ModelLayout(int(lay["n_features"]), tuple(int(h) for h in lay["hidden_sizes"]),
                             float(lay["dropout_rate"]), str(lay["cell"]))
        layout.check()
        fs = FeatureSet(header["feature_set"]["name"], tuple(header["feature_set"]["generators"]))
        trend = TrendModel.from_description(header["trend"])
        hp = None if header["hyperparams"] is None else Hyperparams.from_description(header["hyperparams"])
        time_len = header.get("time_len")
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from None
    expected = _expected_shapes(layout)
    if set(blocks) != set(expected):
        missing = sorted(set(expected) - set(blocks))
        extra = sorted(set(blocks) - set(expected))
        raise ShapeMismatchError(f"{path}: block set differs from layout (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if blocks[name].shape != shape:
            raise ShapeMismatchError(f"{path}: block {name} has shape {blocks[name].shape}, layout implies {shape}")
    layers = [
        Layer(blocks[f"layer{k}.U"], blocks[f"layer{k}.W"], blocks[f"layer{k}.b"])
        for k in range(len(layout.hidden_sizes))
    ]
    tm, ts = blocks["norm.target"]
    norm = NormStats(blocks["norm.mean"], blocks["norm.std"], float(tm), float(ts))
    model = LstmModel(layers, blocks["head.V"], blocks["head.b"], norm, layout.dropout_rate, layout.cell)
    return Checkpoint(model, trend, fs, hp, time_len)


def save(model: LstmModel, trend: TrendModel, feature_set: FeatureSet, path,
         hyperparams: Hyperparams | None = None, time_len: int | None = None) -> None:
    """Write a checkpoint; identical inputs give identical bytes."""
    _atomic_write(encode_checkpoint(Checkpoint(model, trend, feature_set, hyperparams, time_len)), path)


def load(path) -> Checkpoint:
    return decode_checkpoint(_read(path), path)


# ---------------------------------------------------------------- sample cache


def save_samples(samples: list[Sample], feature_set: FeatureSet, trend: TrendModel | None, path) -> None:
    """Cache featurised samples (keys, years, matrices, adjusted targets)."""
    if not samples:
        raise CheckpointError("refusing to cache an empty sample list")
    header = {
        "kind": "samples",
        "feature_set": {"name": feature_set.name, "generators": list(feature_set.generators)},
        "trend": None if trend is None else trend.describe(),
        "keys": [s.key for s in samples],
        "years": [s.year for s in samples],
    }
    blocks = {
        "features": np.stack([s.features for s in samples]),
        "targets": np.array([s.target_adjusted for s in samples], dtype=np.float64),
    }
    _atomic_write(_encode(CACHE_MAGIC, header, blocks), path)


def load_samples(path) -> tuple[list[Sample], FeatureSet, TrendModel | None]:
    header, blocks = _decode(_read(path), CACHE_MAGIC, path)
    try:
        fs = FeatureSet(header["feature_set"]["name"], tuple(header["feature_set"]["generators"]))
        trend = None if header["trend"] is None else TrendModel.from_description(header["trend"])
        keys, years = header["keys"], header["years"]
        X, y = blocks["features"], blocks["targets"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed sample cache ({exc})") from None
    if X.ndim != 3 or X.shape[0] != len(keys) or y.shape != (len(keys),) or len(years) != len(keys) \
            or X.shape[1] != len(fs):
        raise ShapeMismatchError(f"{path}: sample cache blocks disagree with header")
    samples = [Sample(k, int(yr), X[i].copy(), float(y[i])) for i, (k, yr) in enumerate(zip(keys, years))]
    return samples, fs, trend
