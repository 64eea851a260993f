"""Reverse-mode tape: gradients vs central finite differences."""

import numpy as np
import pytest

from dieseltwin.nn import tape as bk


def fd_grad(f, x, h=1e-6):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        step = h * max(1.0, abs(flat[i]))
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * step)
    return g


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-12)


def test_arithmetic_chain_gradient():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=7) + 3.0

    def f(x):
        v = bk.Var(x, requires_grad=True) if isinstance(x, np.ndarray) else x
        y = bk.exp(v * 0.3) / (1.0 + bk.square(v)) + bk.sqrt(v + 5.0) - bk.log(v + 4.0)
        z = bk.vsum(y * y)
        if isinstance(z, bk.Var):
            bk.backward(z)
            return v.grad
        return z

    def scalar(x):
        y = np.exp(x * 0.3) / (1.0 + np.square(x)) + np.sqrt(x + 5.0) - np.log(x + 4.0)
        return np.sum(y * y)

    grad = f(x0)
    assert np.all(rel_err(grad, fd_grad(scalar, x0)) < 1e-6)


def test_clamp_subgradient_zero_on_clamped_branch():
    x = bk.Var(np.array([-1.0, 0.5, 2.0]), requires_grad=True)
    y = bk.vsum(bk.clip(x, 0.0, 1.0) * 3.0)
    bk.backward(y)
    assert np.allclose(x.grad, [0.0, 3.0, 0.0])


def test_where_routes_gradient():
    a = bk.Var(np.array([1.0, 2.0]), requires_grad=True)
    b = bk.Var(np.array([3.0, 4.0]), requires_grad=True)
    y = bk.vsum(bk.where(np.array([True, False]), a, b))
    bk.backward(y)
    assert np.allclose(a.grad, [1.0, 0.0])
    assert np.allclose(b.grad, [0.0, 1.0])


def test_matmul_and_broadcast_gradients():
    rng = np.random.default_rng(1)
    W0 = rng.normal(size=(4, 3))
    b0 = rng.normal(size=3)
    x = rng.normal(size=(5, 4))

    def loss_np(W, b):
        return np.sum(np.tanh(x @ W + b) ** 2)

    W = bk.Var(W0, requires_grad=True)
    b = bk.Var(b0, requires_grad=True)
    z = bk.tanh(x @ W + b)
    bk.backward(bk.vsum(z * z))
    assert np.all(rel_err(W.grad, fd_grad(lambda w: loss_np(w, b0), W0)) < 1e-6)
    assert np.all(rel_err(b.grad, fd_grad(lambda bb: loss_np(W0, bb), b0)) < 1e-6)


def test_softplus_sigmoid_grads():
    x0 = np.linspace(-4, 4, 9)

    def loss_np(x):
        sp = np.logaddexp(0, x)
        sg = 1.0 / (1.0 + np.exp(-x))
        return np.sum(sp * sg)

    x = bk.Var(x0, requires_grad=True)
    bk.backward(bk.vsum(bk.softplus(x) * bk.sigmoid(x)))
    assert np.all(rel_err(x.grad, fd_grad(loss_np, x0)) < 1e-6)


def test_getitem_scatter_gradient():
    x = bk.Var(np.arange(6.0), requires_grad=True)
    y = x[np.array([0, 2, 2, 5])]
    bk.backward(bk.vsum(y * np.array([1.0, 10.0, 100.0, 7.0])))
    assert np.allclose(x.grad, [1.0, 0.0, 110.0, 0.0, 0.0, 7.0])


def test_gradient_independent_parameter_is_zero():
    x = bk.Var(np.ones(3), requires_grad=True)
    unused = bk.Var(np.ones(3), requires_grad=True)
    bk.backward(bk.vsum(bk.square(x)))
    assert unused.grad is None


def test_engine_like_composite_gradient():
    # A miniature of the residual algebra: powers, clip, exp, sqrt, where.
    rng = np.random.default_rng(2)
    p0 = rng.uniform(1.2e5, 2.5e5, size=6)

    def build(p_im):
        ratio = p_im / 2.0e5
        pi = bk.clip(ratio, 0.65, 1.0)
        psi = 1.0 - bk.square((1.0 - pi) / 0.35 - 1.0)
        w = psi * bk.sqrt(p_im) * bk.exp(-1.0e5 / p_im)
        return bk.vmean(bk.square(w - 250.0))

    v = bk.Var(p0, requires_grad=True)
    bk.backward(build(v))

    def scalar(p):
        ratio = p / 2.0e5
        pi = np.clip(ratio, 0.65, 1.0)
        psi = 1.0 - ((1.0 - pi) / 0.35 - 1.0) ** 2
        w = psi * np.sqrt(p) * np.exp(-1.0e5 / p)
        return np.mean((w - 250.0) ** 2)

    assert np.all(rel_err(v.grad, fd_grad(scalar, p0)) < 1e-6)


def test_backward_requires_scalar():
    x = bk.Var(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        bk.backward(x * 2.0)


def test_numpy_passthrough():
    x = np.linspace(0.5, 2.0, 4)
    assert isinstance(bk.exp(x), np.ndarray)
    assert np.allclose(bk.clip(x, 0.8, 1.5), np.clip(x, 0.8, 1.5))
    assert bk.vsum(x) == pytest.approx(x.sum())
