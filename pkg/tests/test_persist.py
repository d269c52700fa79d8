import struct

import numpy as np
import pytest

from yieldcast.core import Sample
from yieldcast.detrend import TrendKind, TrendModel
from yieldcast.errors import CheckpointError, MagicError, ShapeMismatchError, TruncationError, VersionError
from yieldcast.features import FeatureSet, get_feature_set
from yieldcast.lstm import ModelLayout, NormStats, init_params, predict
from yieldcast.persist import (
    FORMAT_VERSION,
    MODEL_MAGIC,
    decode_checkpoint,
    load,
    load_samples,
    save,
    save_samples,
)
from yieldcast.train import Hyperparams

TREND = TrendModel(TrendKind.PERCENTAGE, 2016, 0.015)
FS = get_feature_set("best10")


def trained_like(hidden=(8, 4), cell="lstm", seed=0):
    rng = np.random.default_rng(seed)
    model = init_params(ModelLayout(10, hidden, 0.2, cell), seed)
    for p in model.params().values():
        p += rng.normal(scale=0.1, size=p.shape)
    model.norm = NormStats(rng.normal(size=10), rng.uniform(0.5, 2, 10), 171.3, 18.25)
    return model


@pytest.mark.parametrize("hidden,cell", [((8,), "lstm"), ((8, 4), "lstm"), ((6,), "rnn")])
def test_round_trip_is_bit_identical(tmp_path, rng, hidden, cell):
    model = trained_like(hidden, cell)
    hp = Hyperparams(0.01, hidden, 0.2, cell=cell)
    save(model, TREND, FS, tmp_path / "m.yldc", hp, 122)
    ck = load(tmp_path / "m.yldc")
    for name, p in model.params().items():
        assert np.array_equal(ck.model.params()[name], p)
    assert np.array_equal(ck.model.norm.mean, model.norm.mean)
    assert (ck.model.norm.target_mean, ck.model.norm.target_std) == (171.3, 18.25)
    assert ck.trend == TREND and ck.feature_set == FS and ck.hyperparams == hp and ck.time_len == 122
    assert ck.model.layout == model.layout
    X = rng.normal(size=(100, 10, 9))
    assert np.array_equal(predict(ck.model, X), predict(model, X))


def test_saves_are_byte_identical(tmp_path):
    model = trained_like()
    save(model, TREND, FS, tmp_path / "a.yldc")
    save(model, TREND, FS, tmp_path / "b.yldc")
    a = (tmp_path / "a.yldc").read_bytes()
    assert a == (tmp_path / "b.yldc").read_bytes()
    assert a[:4] == MODEL_MAGIC and struct.unpack("<H", a[4:6])[0] == FORMAT_VERSION
    assert not list(tmp_path.glob(".*"))


def test_corrupt_files(tmp_path):
    save(trained_like(), TREND, FS, tmp_path / "m.yldc")
    data = (tmp_path / "m.yldc").read_bytes()
    with pytest.raises(MagicError):
        decode_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(VersionError):
        decode_checkpoint(data[:4] + struct.pack("<H", 0xFFFF) + data[6:])
    for cut in (3, 10, len(data) // 2, len(data) - 1):
        with pytest.raises(TruncationError):
            decode_checkpoint(data[:cut])
    with pytest.raises(CheckpointError):
        decode_checkpoint(data + b"\0")
    with pytest.raises(CheckpointError):
        load(tmp_path / "missing.yldc")


def test_feature_set_must_match_layout(tmp_path):
    with pytest.raises(ShapeMismatchError):
        save(trained_like(), TREND, get_feature_set("set15"), tmp_path / "m.yldc")


def test_non_finite_parameters_refused(tmp_path):
    model = trained_like()
    model.V[0] = np.nan
    with pytest.raises(CheckpointError):
        save(model, TREND, FS, tmp_path / "m.yldc")
    assert not (tmp_path / "m.yldc").exists()


def test_block_shape_mismatch_detected(tmp_path):
    """A header that promises a bigger model than the blocks hold is rejected."""
    save(trained_like(hidden=(8,)), TREND, FS, tmp_path / "m.yldc")
    data = (tmp_path / "m.yldc").read_bytes()
    hlen = struct.unpack("<I", data[6:10])[0]
    header = data[10 : 10 + hlen].replace(b'"hidden_sizes":[8]', b'"hidden_sizes":[9]')
    assert len(header) == hlen
    with pytest.raises(ShapeMismatchError):
        decode_checkpoint(data[:10] + header + data[10 + hlen :])


def test_sample_cache_round_trip(tmp_path, rng):
    fs = FeatureSet("pair", ("tmax", "rain"))
    samples = [Sample(f"C{i}", 2000 + i % 3, rng.normal(size=(2, 214)), float(rng.normal(170, 20))) for i in range(7)]
    save_samples(samples, fs, None, tmp_path / "s.ylds")
    back, fs2, trend = load_samples(tmp_path / "s.ylds")
    assert fs2 == fs and trend is None
    for a, b in zip(samples, back):
        assert (a.key, a.year, a.target_adjusted) == (b.key, b.year, b.target_adjusted)
        assert np.array_equal(a.features, b.features)
    with pytest.raises(MagicError):
        decode_checkpoint((tmp_path / "s.ylds").read_bytes())
    with pytest.raises(CheckpointError):
        save_samples([], fs, None, tmp_path / "e.ylds")
