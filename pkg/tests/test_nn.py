import math

import numpy as np
import pytest

from filmqec import nn
from filmqec.errors import EmptyGraph, ShapeMismatch
from filmqec.nn import Tensor

SEEDS = range(20)


def numeric_grad(f, arrays, k, eps=1e-6):
    base = arrays[k]
    g = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        old = base[idx]
        base[idx] = old + eps
        up = f(*arrays)
        base[idx] = old - eps
        down = f(*arrays)
        base[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def check_grad(op, arrays, rng, tol=1e-6):
    """Compare reverse-mode gradients of sum(R * op(...)) with central differences."""
    out_shape = op(*[Tensor(a) for a in arrays]).shape
    proj = rng.normal(size=out_shape)

    def scalar(*arrs):
        return float(np.sum(op(*[Tensor(a) for a in arrs]).data * proj))

    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    nn.total(nn.mul(op(*ts), proj)).backward()
    for k, t in enumerate(ts):
        num = numeric_grad(scalar, [a.copy() for a in arrays], k)
        np.testing.assert_allclose(t.grad, num, rtol=tol, atol=tol)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_grad(seed):
    rng = np.random.default_rng(seed)
    b, ci, co, h, w = 2, 2, 3, int(rng.integers(1, 4)), int(rng.integers(1, 5))
    check_grad(
        nn.conv2d_3x3,
        [rng.normal(size=(b, ci, h, w)), rng.normal(size=(co, ci, 3, 3)), rng.normal(size=co)],
        rng,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_gcn_grad(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    a = rng.random((n, n))
    a_norm = nn.normalized_adjacency((a + a.T) / 2 * (1 - np.eye(n)))
    check_grad(
        lambda x, w, b: nn.gcn_layer(x, a_norm, w, b),
        [rng.normal(size=(2, n, 3)), rng.normal(size=(3, 4)), rng.normal(size=4)],
        rng,
    )


@pytest.mark.parametrize("seed", SEEDS)
def test_pool_film_affine_grads(seed):
    rng = np.random.default_rng(seed)
    check_grad(nn.global_mean_pool, [rng.normal(size=(3, int(rng.integers(1, 6)), 4))], rng)
    check_grad(nn.film, [rng.normal(size=(2, 3, 2, 4)), rng.normal(size=3), rng.normal(size=3)], rng)
    check_grad(nn.film, [rng.normal(size=(2, 3, 2, 4)), rng.normal(size=(2, 3)), rng.normal(size=(2, 3))], rng)
    check_grad(nn.affine, [rng.normal(size=(4, 5)), rng.normal(size=(5, 3)), rng.normal(size=3)], rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_sigmoid_bce_grads(seed):
    rng = np.random.default_rng(seed)
    y = rng.random((4, 3))
    w = rng.random(4)
    check_grad(nn.sigmoid, [rng.normal(scale=3, size=(4, 3))], rng)
    check_grad(lambda z: nn.bce_loss(nn.sigmoid(z), y), [rng.normal(size=(4, 3))], rng)
    check_grad(lambda z: nn.bce_loss(nn.sigmoid(z), y, w), [rng.normal(size=(4, 3))], rng)


@pytest.mark.parametrize("seed", SEEDS[:5])
def test_indexing_and_cast_grads(seed):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 3, 7)
    check_grad(lambda x: nn.take_rows(x, idx), [rng.normal(size=(3, 4))], rng)
    check_grad(lambda x: nn.take_cols(x, 1, 3), [rng.normal(size=(3, 4))], rng)
    check_grad(lambda x: nn.cast(x, np.float64), [rng.normal(size=(3, 4))], rng)
    check_grad(lambda x: nn.relu(nn.reshape(x, (12,))), [rng.normal(size=(3, 4))], rng)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 4, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 4, 5))
    for n in range(2):
        for o in range(4):
            for i in range(4):
                for j in range(5):
                    ref[n, o, i, j] = np.sum(xp[n, :, i:i + 3, j:j + 3] * w[o]) + b[o]
    np.testing.assert_allclose(nn.conv2d_3x3(Tensor(x), Tensor(w), Tensor(b)).data, ref, rtol=1e-12)
    np.testing.assert_allclose(nn.conv2d_3x3(Tensor(x[0]), Tensor(w), Tensor(b)).data, ref[0], rtol=1e-12)


def test_gcn_normalization_oracle():
    a = np.array([[0, 1.0, 0], [1.0, 0, 2.0], [0, 2.0, 0]])
    ah = a + np.eye(3)
    deg = ah.sum(1)
    ref = np.array([[ah[i, j] / math.sqrt(deg[i] * deg[j]) for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(nn.normalized_adjacency(a), ref)


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        nn.affine(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeMismatch):
        nn.conv2d_3x3(Tensor(np.ones((1, 2, 3, 3))), Tensor(np.ones((4, 3, 3, 3))), Tensor(np.ones(4)))
    with pytest.raises(ShapeMismatch):
        nn.film(Tensor(np.ones((2, 3, 3))), Tensor(np.ones(3)), Tensor(np.ones(3)))
    with pytest.raises(ShapeMismatch):
        nn.bce_loss(Tensor(np.full((2, 3), 0.5)), np.zeros((3, 2)))
    with pytest.raises(EmptyGraph):
        nn.global_mean_pool(Tensor(np.ones((0, 4))))


def test_bce_value_and_weighting():
    p = np.array([[0.9, 0.2], [0.4, 0.5]])
    y = np.array([[1.0, 0.0], [1.0, 0.5]])
    per = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert float(nn.bce_loss(Tensor(p), y).data) == pytest.approx(per.mean())
    w = np.array([0.25, 0.75])
    assert float(nn.bce_loss(Tensor(p), y, w).data) == pytest.approx(0.25 * per[0].mean() + 0.75 * per[1].mean())


def test_merged_rows_reproduce_plain_mean():
    # duplicate rows folded into one with a soft target and count weight
    rng = np.random.default_rng(2)
    z = rng.normal(size=(1, 3))
    ys = rng.integers(0, 2, (5, 3)).astype(float)
    full = Tensor(np.repeat(z, 5, axis=0), requires_grad=True)
    nn.bce_loss(nn.sigmoid(full), ys).backward()
    merged = Tensor(z.copy(), requires_grad=True)
    loss = nn.bce_loss(nn.sigmoid(merged), ys.mean(0, keepdims=True), np.array([1.0]))
    loss.backward()
    ref = nn.bce_loss(nn.sigmoid(Tensor(np.repeat(z, 5, axis=0))), ys).data
    assert float(loss.data) == pytest.approx(float(ref), rel=1e-12)
    np.testing.assert_allclose(merged.grad, full.grad.sum(0, keepdims=True), rtol=1e-12)


def test_sigmoid_clamp():
    p = nn.sigmoid(Tensor(np.array([-1e3, 0.0, 1e3]))).data
    assert 0 < p[0] < 1e-12 and p[1] == 0.5 and 1 - 1e-12 < p[2] < 1


def test_float32_ops_keep_dtype():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 1, 3, 4)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 1, 3, 3)).astype(np.float32), requires_grad=True)
    b = Tensor(np.zeros(2, np.float32), requires_grad=True)
    out = nn.conv2d_3x3(x, w, b)
    assert out.data.dtype == np.float32
    nn.total(out).backward()
    assert w.grad.dtype == np.float32


def test_adam_single_step_oracle():
    params = {"w": np.array([1.0, -2.0])}
    g = np.array([0.5, -0.1])
    state = nn.AdamState(base_lr=0.1)
    nn.adam_step(params, {"w": g}, state)
    m = 0.1 * g / (1 - 0.9)
    v = 0.001 * g * g / (1 - 0.999)
    np.testing.assert_allclose(params["w"], [1.0, -2.0] - 0.1 * m / (np.sqrt(v) + 1e-8))
    # first step moves each coordinate by about lr against the gradient sign
    np.testing.assert_allclose(params["w"], [0.9, -1.9], atol=1e-6)


def test_adam_minimizes_quadratic():
    params = {"w": np.array([3.0, -4.0])}
    state = nn.AdamState(base_lr=0.05)
    for _ in range(2000):
        nn.adam_step(params, {"w": 2 * params["w"]}, state)
    assert np.abs(params["w"]).max() < 1e-2


def test_cosine_schedule():
    assert nn.cosine_lr(0, 100, 5e-3) == pytest.approx(5e-3)
    assert nn.cosine_lr(50, 100, 5e-3) == pytest.approx(2.5e-3)
    assert nn.cosine_lr(100, 100, 5e-3) == pytest.approx(0.0, abs=1e-18)
    lrs = [nn.cosine_lr(e, 100, 5e-3) for e in range(101)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_gradients_accumulate_over_shared_parents():
    x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    nn.total(nn.mul(x, x)).backward()
    np.testing.assert_allclose(x.grad, [4.0, 6.0])
