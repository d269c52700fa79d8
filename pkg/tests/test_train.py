import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yieldcast.core import Sample
from yieldcast.errors import ConfigError, ShapeError
from yieldcast.lstm import ModelLayout, forward, init_params
from yieldcast.train import (
    DataSplit,
    Hyperparams,
    SearchSpace,
    bptt,
    grad_check,
    mse,
    random_search,
    read_trial_log,
    relative_error,
    sample_configs,
    sgd_step,
    split_samples,
    train_model,
)


def tiny_split(seed=0, n=40, T=6):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n + 10, 2, T))
    y = 150 + 10 * X[:, 0, :].mean(axis=1) + rng.normal(scale=0.5, size=n + 10)
    return DataSplit(X[:n], y[:n], X[n:], y[n:])


# ---------------------------------------------------------------- loss


def test_mse_examples(rng):
    t = rng.normal(size=20)
    assert mse(t, t) == 0.0
    assert mse(t + 1, t) == 1.0
    assert mse(np.full(20, t.mean()), t) == pytest.approx(np.var(t), rel=1e-12)
    assert mse([1.0, 2.0], [1.0, 4.0]) == 2.0
    with pytest.raises(ShapeError):
        mse([1.0], [1.0, 2.0])
    with pytest.raises(ShapeError):
        mse([], [])


# ---------------------------------------------------------------- gradients


def test_zero_loss_gives_zero_gradients(rng):
    model = init_params(ModelLayout(3, (4,)), 0)
    X = rng.normal(size=(3, 3, 5))
    y = forward(X, model)[0]
    loss, grads = bptt(model, X, y)
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def test_duplicated_batch_gives_same_gradient(rng):
    model = init_params(ModelLayout(3, (4, 4)), 1)
    X = rng.normal(size=(3, 3, 5))
    y = rng.normal(size=3)
    _, g1 = bptt(model, X, y)
    _, g2 = bptt(model, np.concatenate([X, X]), np.concatenate([y, y]))
    for name in g1:
        assert np.allclose(g1[name], g2[name], rtol=0, atol=1e-12)


def test_gradient_blocks_follow_params(rng):
    model = init_params(ModelLayout(3, (4, 2)), 0)
    _, grads = bptt(model, rng.normal(size=(2, 3, 5)), rng.normal(size=2))
    assert list(grads) == list(model.params())
    assert all(grads[k].shape == v.shape for k, v in model.params().items())


@pytest.mark.parametrize("hidden,cell", [((4,), "lstm"), ((4, 4), "lstm"), ((4,), "rnn"), ((4, 3), "rnn")])
def test_grad_check_passes(hidden, cell):
    report = grad_check(ModelLayout(3, hidden, 0.0, cell), seed=0)
    assert report.passed, report


def test_grad_check_with_dropout():
    assert grad_check(ModelLayout(3, (4, 4), 0.3), seed=5).passed


def test_grad_check_catches_corrupt_recurrent_block():
    report = grad_check(ModelLayout(3, (4,)), seed=0, corrupt_block="layer0.W")
    assert not report.passed
    assert report.worst_block == "layer0.W"


def test_grad_check_large_step_is_truncation_limited():
    small = grad_check(ModelLayout(3, (4,)), seed=0)
    big = grad_check(ModelLayout(3, (4,)), seed=0, eps=1e-3, tolerance=1e-3)
    assert small.max_rel_error < big.max_rel_error < 1e-3


def test_grad_check_refuses_large_models():
    with pytest.raises(ConfigError):
        grad_check(ModelLayout(3, (64,)))


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-12]))[0] == pytest.approx(1e-4)
    assert relative_error(np.array([2.0]), np.array([1.0]))[0] == 0.5


# ---------------------------------------------------------------- sgd


def test_sgd_step_examples(rng):
    model = init_params(ModelLayout(2, (3,)), 0)
    params = model.params()
    zero = {k: np.zeros_like(v) for k, v in params.items()}
    same = sgd_step(model, zero, 0.1)
    assert all(np.array_equal(same.params()[k], v) for k, v in params.items())
    g = {k: rng.normal(size=v.shape) for k, v in params.items()}
    same = sgd_step(model, g, 0.0)
    assert all(np.array_equal(same.params()[k], v) for k, v in params.items())
    # one scalar entry: p = 1, g = 0.5, lr = 0.1 -> 0.95
    model.c[0] = 1.0
    g = dict(zero, **{"head.b": np.array([0.5])})
    assert sgd_step(model, g, 0.1).c[0] == 0.95
    with pytest.raises(ConfigError):
        sgd_step(model, zero, math.nan)


def test_sgd_clips_global_norm():
    model = init_params(ModelLayout(2, (3,)), 0)
    g = {k: np.zeros_like(v) for k, v in model.params().items()}
    g["head.b"] = np.array([50.0])
    assert sgd_step(model, g, 1.0, clip=5.0).c[0] == pytest.approx(model.c[0] - 5.0)
    assert sgd_step(model, g, 1.0, clip=None).c[0] == pytest.approx(model.c[0] - 50.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_small_step_decreases_batch_loss(seed):
    rng = np.random.default_rng(seed)
    model = init_params(ModelLayout(3, (4,)), seed % 997)
    X = rng.normal(size=(4, 3, 5))
    y = rng.normal(size=4)
    loss, grads = bptt(model, X, y)
    after = mse(forward(X, sgd_step(model, grads, 1e-6, clip=None), "infer")[0], y)
    assert after < loss


# ---------------------------------------------------------------- training loop


def test_learns_noiseless_cumulative_target():
    rng = np.random.default_rng(0)

    def make(n):
        daily = rng.uniform(0, 1, (n, 1, 20))
        X = np.concatenate([np.cumsum(daily, axis=2), daily], axis=1)
        return X, 3.0 * X[:, 0, -1] + 100

    (Xt, yt), (Xv, yv) = make(300), make(60)
    report = train_model(DataSplit(Xt, yt, Xv, yv), Hyperparams(0.1, (8,), 0.0, 16, 200, 20, 0))
    assert report.best_val_mse < 0.01 * np.var(yv)


def test_training_is_deterministic_and_best_is_min():
    hp = Hyperparams(0.05, (8,), 0.2, 8, 5, 10, 3)
    a = train_model(tiny_split(), hp)
    b = train_model(tiny_split(), hp)
    assert a.train_mse == b.train_mse and a.val_mse == b.val_mse
    assert a.best_val_mse == min(a.val_mse)
    assert all(np.array_equal(a.model.params()[k], v) for k, v in b.model.params().items())


def test_patience_zero_stops_after_first_non_improvement():
    report = train_model(tiny_split(), Hyperparams(0.1, (8,), 0.0, 8, 60, 0, 0))
    v = report.val_mse
    first_bad = next((e for e in range(1, len(v)) if v[e] >= min(v[:e])), None)
    assert first_bad is not None
    assert report.epochs == first_bad + 1


def test_empty_split_rejected():
    s = tiny_split()
    with pytest.raises(ConfigError):
        train_model(DataSplit(s.X_train, s.y_train, s.X_val[:0], s.y_val[:0]), Hyperparams(max_epochs=1, hidden_sizes=(8,)))


def test_hyperparams_bounds():
    for hp in (Hyperparams(1.0, (8,)), Hyperparams(0.01, (4,)), Hyperparams(0.01, (8, 8, 8)), Hyperparams(0.01, (8,), 0.7)):
        with pytest.raises(ConfigError):
            hp.check()
    hp = Hyperparams(0.02, (16, 8), 0.1, seed=9)
    assert Hyperparams.from_description(hp.describe()) == hp


def test_split_never_validates_on_combinations():
    samples = [Sample(f"C{i}", 2000, np.zeros((1, 2)), 1.0) for i in range(20)]
    samples += [Sample(f"C{i}+C{i + 1}", 2000, np.zeros((1, 2)), 1.0) for i in range(19)]
    train, val = split_samples(samples, 0.1, 4)
    assert len(val) == 2 and not any(s.is_combination for s in val)
    assert len(train) + len(val) == len(samples)
    assert not {id(s) for s in train} & {id(s) for s in val}
    assert split_samples(samples, 0.1, 4)[1] == val


# ---------------------------------------------------------------- search


def test_search_space_sampling():
    space = SearchSpace(hidden_grid=(8, 16), max_epochs=2)
    a, b = sample_configs(space, 50, 1), sample_configs(space, 50, 1)
    assert a == b
    assert all(1e-4 <= h.learning_rate <= 1e-1 for h in a)
    assert {h.layers for h in a} == {1, 2}
    assert {d for h in a for d in [h.dropout_rate]} <= set(space.dropout_grid)
    with pytest.raises(ConfigError):
        sample_configs(SearchSpace(hidden_grid=()), 1, 0)
    with pytest.raises(ConfigError):
        sample_configs(space, 0, 0)


def test_search_log_properties(tmp_path):
    space = SearchSpace(lr_range=(0.01, 0.1), layer_choices=(1,), hidden_grid=(8,), max_epochs=2, patience=1)
    result = random_search(space, 3, 5, tiny_split(), log_path=tmp_path / "trials.csv")
    rows = read_trial_log(tmp_path / "trials.csv")
    assert len(rows) == 3 and [int(r["trial"]) for r in rows] == [0, 1, 2]
    vals = [float(r["val_mse"]) for r in rows]
    assert result.best.val_mse == min(vals)
    assert all(r["wall_s"] == "" for r in rows)
    assert (tmp_path / "trials.csv").read_text().startswith("# validation:")
    one = random_search(space, 1, 5, tiny_split())
    assert one.best.trial == 0 and len(one.trials) == 1
