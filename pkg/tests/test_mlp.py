from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emrecg import mlp
from emrecg.mlp import (
    Adam,
    MLPModel,
    ModelFormatError,
    NumericalError,
    TrainConfig,
    elu,
    elu_grad,
    init_model,
    load_model,
    one_hot,
    save_model,
    train,
    train_step,
)

DATA = Path(__file__).parent / "data"


def test_init_shapes_and_determinism():
    m = init_model(10, seed=1)
    assert m.layer_dims == (10, 32, 128, 64, 5)
    assert m.weights[0].shape == (10, 32)
    assert m.activations == ("tanh", "elu", "tanh", "softmax")
    m2 = init_model(10, seed=1)
    assert all(np.array_equal(a, b) for a, b in zip(m.params(), m2.params()))
    assert all(not b.any() for b in m.biases)


def test_glorot_limit():
    m = init_model(17, seed=5)
    for w in m.weights:
        fan_in, fan_out = w.shape
        assert np.abs(w).max() <= math.sqrt(6.0 / (fan_in + fan_out))


def test_init_rejects_bad_dim():
    with pytest.raises(ValueError):
        init_model(0)


def test_zero_model_uniform():
    m = init_model(4, seed=0)
    for p in m.params():
        p[...] = 0.0
    np.testing.assert_array_equal(m.forward(np.ones(4)), np.full(5, 0.2))


def test_hand_computed_forward():
    m = init_model(1, seed=0, hidden=(1, 1, 1))
    assert m.activations == ("tanh", "elu", "tanh", "softmax")
    m.weights[0][...] = 0.5
    m.biases[0][...] = 0.1
    m.weights[1][...] = -2.0
    m.weights[2][...] = 0.3
    m.biases[2][...] = 0.05
    m.weights[3][...] = [[0.1, 0.2, 0.3, 0.4, 0.5]]
    x = 1.0
    h1 = math.tanh(0.5 * x + 0.1)
    z2 = -2.0 * h1
    h2 = math.exp(z2) - 1.0  # negative branch of ELU with alpha 1
    h3 = math.tanh(0.3 * h2 + 0.05)
    logits = [c * h3 for c in (0.1, 0.2, 0.3, 0.4, 0.5)]
    denom = sum(math.exp(v) for v in logits)
    expected = [math.exp(v) / denom for v in logits]
    np.testing.assert_allclose(m.forward(np.array([x])), expected, rtol=1e-13)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        init_model(3).forward(np.ones(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-50, 50))
def test_softmax_normalised(seed, scale):
    rng = np.random.default_rng(seed)
    m = init_model(7, seed=seed)
    p = m.forward(scale * rng.normal(size=(4, 7)))
    assert np.all(np.abs(p.sum(axis=1) - 1.0) < 1e-6)
    assert np.all((p >= 0) & (p <= 1))


def test_elu_continuity_at_zero():
    eps = 1e-9
    assert abs(elu(np.array(eps)) - elu(np.array(-eps))) < 1e-8
    assert elu(np.array(0.0)) == 0.0
    assert abs(elu_grad(np.array(eps)) - elu_grad(np.array(-eps))) < 1e-8


# -- gradients ----------------------------------------------------------------

def fd_grads(model: MLPModel, x, y, h=1e-5):
    out = []
    for p in model.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            lp, _ = model.loss_and_grads(x, y)
            p[i] = old - h
            lm, _ = model.loss_and_grads(x, y)
            p[i] = old
            g[i] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def rel_error(a, b):
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def test_gradient_five_sample_batch():
    rng = np.random.default_rng(0)
    m = init_model(4, seed=3, hidden=(5, 6, 4))
    x = rng.normal(size=(5, 4))
    y = one_hot(rng.integers(0, 5, size=5))
    _, g = m.loss_and_grads(x, y)
    for a, b in zip(g, fd_grads(m, x, y)):
        assert rel_error(a, b) < 1e-4


def test_first_adam_step_is_lr():
    opt = Adam(lr=0.001)
    p = np.array([2.0])
    opt.step([p], [np.array([0.37])])
    # m_hat = g and v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps)
    assert 2.0 - p[0] == pytest.approx(0.001 * 0.37 / (0.37 + 1e-7), rel=1e-12)
    assert 2.0 - p[0] == pytest.approx(0.001, rel=1e-6)


def test_zero_gradient_batch_leaves_params():
    rng = np.random.default_rng(1)
    m = init_model(3, seed=2)
    x = rng.normal(size=(4, 3))
    y = m.forward(x)
    before = [p.copy() for p in m.params()]
    train_step(m, x, y, Adam())
    for a, b in zip(before, m.params()):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_train_step_returns_pre_update_loss():
    rng = np.random.default_rng(2)
    m = init_model(3, seed=2)
    x, y = rng.normal(size=(6, 3)), one_hot(rng.integers(0, 5, size=6))
    expected, _ = m.loss_and_grads(x, y)
    assert train_step(m, x, y, Adam()) == expected


def test_nan_loss_raises():
    m = init_model(3, seed=0)
    x = np.full((2, 3), np.nan)
    with pytest.raises(NumericalError, match="non-finite"):
        train_step(m, x, one_hot([0, 1]), Adam())


def test_overfit_fixed_batch_monotone():
    rng = np.random.default_rng(4)
    m = init_model(6, seed=4)
    x, y = rng.normal(size=(10, 6)), one_hot(rng.integers(0, 5, size=10))
    opt = Adam()
    losses = [train_step(m, x, y, opt) for _ in range(200)]
    tail = losses[10:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


# -- training -----------------------------------------------------------------

def test_separable_toy_set():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(-2, 0.3, size=(30, 2)), rng.normal(2, 0.3, size=(30, 2))])
    labels = [0] * 30 + [1] * 30
    m = init_model(2, seed=0, n_classes=2)
    train(m, x, one_hot(labels, 2), TrainConfig(epochs=50, batch_size=10))
    assert (np.argmax(m.forward(x), axis=1) == labels).mean() == 1.0


def test_steps_per_epoch(monkeypatch):
    calls = []
    real = mlp.train_step

    def counting(*a, **k):
        calls.append(len(a[1]))
        return real(*a, **k)

    monkeypatch.setattr(mlp, "train_step", counting)
    rng = np.random.default_rng(0)
    hist = train(init_model(3), rng.normal(size=(60, 3)), one_hot(rng.integers(0, 5, 60)),
                 TrainConfig(epochs=3, batch_size=50))
    assert len(hist) == 3
    assert calls == [50, 10] * 3


def test_train_deterministic():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(40, 3)), one_hot(rng.integers(0, 5, 40))
    cfg = TrainConfig(epochs=5, batch_size=16, seed=9)
    h1 = train(init_model(3, seed=1), x, y, cfg)
    h2 = train(init_model(3, seed=1), x, y, cfg)
    assert h1 == h2


def test_train_empty():
    with pytest.raises(ValueError):
        train(init_model(3), np.zeros((0, 3)), np.zeros((0, 5)))
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


# -- persistence --------------------------------------------------------------

def test_save_load_bitwise(tmp_path):
    m = init_model(5, seed=8)
    save_model(m, tmp_path / "m.emlp")
    back = load_model(tmp_path / "m.emlp")
    x = np.random.default_rng(0).normal(size=(7, 5))
    assert np.array_equal(back.forward(x), m.forward(x))
    assert back.activations == m.activations


def test_corrupt_files(tmp_path):
    m = init_model(5, seed=8)
    save_model(m, tmp_path / "m.emlp")
    data = (tmp_path / "m.emlp").read_bytes()
    (tmp_path / "trunc.emlp").write_bytes(data[:-9])
    (tmp_path / "trail.emlp").write_bytes(data + b"\0")
    (tmp_path / "magic.emlp").write_bytes(b"XXXX" + data[4:])
    (tmp_path / "ver.emlp").write_bytes(data[:4] + (99).to_bytes(4, "little") + data[8:])
    (tmp_path / "short.emlp").write_bytes(data[:10])
    for name in ("trunc", "trail", "magic", "ver", "short"):
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / f"{name}.emlp")


def test_golden_file():
    m = load_model(DATA / "golden_model.emlp")
    ref = json.loads((DATA / "golden_probe.json").read_text())
    expected = np.array([[float.fromhex(v) for v in row] for row in ref["expected"]])
    # identical up to BLAS summation order on other platforms
    np.testing.assert_allclose(m.forward(np.array(ref["probe"])), expected, rtol=0, atol=1e-12)
