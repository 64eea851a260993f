"""Reverse-mode automatic differentiation on numpy values.

A :class:`Var` wraps an ndarray (or scalar) and records the operations
applied to it.  Calling :func:`backward` on a scalar result accumulates
exact gradients into every leaf created with ``requires_grad=True``.

The module-level math functions (``exp``, ``sqrt``, ``where`` ...) dispatch
on their argument: plain numpy in, plain numpy out.  This lets the engine
formulas be written once and evaluated either numerically or under the
tape.  Supported primitives: arithmetic, powers with constant exponent,
matmul, tanh, sigmoid, softplus, exp, log, sqrt, square, sum/mean,
elementwise min/max (zero subgradient on the clamped branch), where with a
boolean mask, and basic indexing.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as sp_expit

__all__ = [
    "Var",
    "backward",
    "exp",
    "log",
    "sqrt",
    "square",
    "tanh",
    "sigmoid",
    "softplus",
    "minimum",
    "maximum",
    "clip",
    "where",
    "vsum",
    "vmean",
    "matmul",
    "stack_cols",
    "value_of",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if shape == ():
        return np.sum(grad)
    extra = np.ndim(grad) - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "_parents", "_vjps", "requires_grad", "grad")

    # Keep numpy from hijacking `ndarray <op> Var`; forces our reflected ops.
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=float) if not np.isscalar(value) else float(value)
        self._parents: tuple = ()
        self._vjps: tuple = ()
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Var(shape={np.shape(self.value)}, requires_grad={self.requires_grad})"

    # -- graph construction helpers -------------------------------------

    @staticmethod
    def _make(value, parents, vjps):
        needed = tuple(
            (p, f) for p, f in zip(parents, vjps) if p.requires_grad
        )
        out = Var(value, requires_grad=bool(needed))
        if needed:
            out._parents = tuple(p for p, _ in needed)
            out._vjps = tuple(f for _, f in needed)
        return out

    # -- binary arithmetic -----------------------------------------------

    def __add__(self, other):
        if isinstance(other, Var):
            val = np.add(self.value, other.value)
            return Var._make(
                val,
                (self, other),
                (
                    lambda g: _unbroadcast(g, np.shape(self.value)),
                    lambda g: _unbroadcast(g, np.shape(other.value)),
                ),
            )
        val = np.add(self.value, other)
        return Var._make(val, (self,), (lambda g: _unbroadcast(g, np.shape(self.value)),))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Var._make(np.negative(self.value), (self,), (lambda g: -g,))

    def __mul__(self, other):
        if isinstance(other, Var):
            val = np.multiply(self.value, other.value)
            return Var._make(
                val,
                (self, other),
                (
                    lambda g: _unbroadcast(g * other.value, np.shape(self.value)),
                    lambda g: _unbroadcast(g * self.value, np.shape(other.value)),
                ),
            )
        val = np.multiply(self.value, other)
        return Var._make(
            val, (self,), (lambda g: _unbroadcast(g * other, np.shape(self.value)),)
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            val = np.divide(self.value, other.value)
            return Var._make(
                val,
                (self, other),
                (
                    lambda g: _unbroadcast(g / other.value, np.shape(self.value)),
                    lambda g: _unbroadcast(
                        -g * self.value / (other.value * other.value),
                        np.shape(other.value),
                    ),
                ),
            )
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        val = np.divide(other, self.value)
        return Var._make(
            val,
            (self,),
            (
                lambda g: _unbroadcast(
                    -g * other / (self.value * self.value), np.shape(self.value)
                ),
            ),
        )

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("only constant exponents are supported")
        val = np.power(self.value, exponent)

        def vjp(g):
            # Finite subgradient at base 0 (exponents < 1 would give inf,
            # which poisons clamp-masked branches with inf * 0).
            base = np.where(np.asarray(self.value) == 0.0, 1e-150, self.value)
            return _unbroadcast(
                g * exponent * np.power(base, exponent - 1.0), np.shape(self.value)
            )

        return Var._make(val, (self,), (vjp,))

    def __matmul__(self, other):
        a = self.value
        b = other.value if isinstance(other, Var) else other
        val = a @ b
        if isinstance(other, Var):
            return Var._make(
                val,
                (self, other),
                (lambda g: g @ b.T, lambda g: a.T @ g),
            )
        return Var._make(val, (self,), (lambda g: g @ b.T,))

    def __rmatmul__(self, other):
        b = self.value
        val = other @ b
        return Var._make(val, (self,), (lambda g: np.asarray(other).T @ g,))

    def __getitem__(self, key):
        val = self.value[key]

        def vjp(g):
            out = np.zeros_like(self.value)
            np.add.at(out, key, g)
            return out

        return Var._make(val, (self,), (vjp,))


def value_of(x):
    """Underlying numpy value of ``x`` (identity for non-Vars)."""
    return x.value if isinstance(x, Var) else x


# -- elementwise functions (dual numpy/tape dispatch) ----------------------


def exp(x):
    if isinstance(x, Var):
        val = np.exp(x.value)
        return Var._make(val, (x,), (lambda g: g * val,))
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        return Var._make(np.log(x.value), (x,), (lambda g: g / x.value,))
    return np.log(x)


def sqrt(x):
    # Subgradient at 0 is finite (huge), not inf: sqrt(max(0, a)) patterns
    # mask it to exactly zero downstream instead of producing NaN.
    if isinstance(x, Var):
        val = np.sqrt(x.value)
        return Var._make(
            val, (x,), (lambda g: g * (0.5 / np.maximum(val, 1e-150)),)
        )
    return np.sqrt(x)


def square(x):
    if isinstance(x, Var):
        return Var._make(np.square(x.value), (x,), (lambda g: g * (2.0 * x.value),))
    return np.square(x)


def tanh(x):
    if isinstance(x, Var):
        val = np.tanh(x.value)
        return Var._make(val, (x,), (lambda g: g * (1.0 - val * val),))
    return np.tanh(x)


def _sigmoid(x):
    return sp_expit(np.asarray(x, dtype=float))


def sigmoid(x):
    if isinstance(x, Var):
        val = _sigmoid(np.asarray(x.value, dtype=float))
        return Var._make(val, (x,), (lambda g: g * (val * (1.0 - val)),))
    return _sigmoid(np.asarray(x, dtype=float))


def softplus(x):
    if isinstance(x, Var):
        val = np.logaddexp(0.0, x.value)
        return Var._make(
            val, (x,), (lambda g: g * _sigmoid(np.asarray(x.value, dtype=float)),)
        )
    return np.logaddexp(0.0, x)


def minimum(x, y):
    """Elementwise min; gradient flows only to the winning branch."""
    xv, yv = value_of(x), value_of(y)
    val = np.minimum(xv, yv)
    if not (isinstance(x, Var) or isinstance(y, Var)):
        return val
    mask_x = xv <= yv
    parents, vjps = [], []
    if isinstance(x, Var):
        parents.append(x)
        vjps.append(lambda g: _unbroadcast(g * mask_x, np.shape(xv)))
    if isinstance(y, Var):
        parents.append(y)
        vjps.append(lambda g: _unbroadcast(g * (~mask_x), np.shape(yv)))
    return Var._make(val, tuple(parents), tuple(vjps))


def maximum(x, y):
    """Elementwise max; gradient flows only to the winning branch."""
    xv, yv = value_of(x), value_of(y)
    val = np.maximum(xv, yv)
    if not (isinstance(x, Var) or isinstance(y, Var)):
        return val
    mask_x = xv >= yv
    parents, vjps = [], []
    if isinstance(x, Var):
        parents.append(x)
        vjps.append(lambda g: _unbroadcast(g * mask_x, np.shape(xv)))
    if isinstance(y, Var):
        parents.append(y)
        vjps.append(lambda g: _unbroadcast(g * (~mask_x), np.shape(yv)))
    return Var._make(val, tuple(parents), tuple(vjps))


def clip(x, lo, hi):
    return minimum(maximum(x, lo), hi)


def where(mask, a, b):
    """Select ``a`` where ``mask`` else ``b``; ``mask`` is a plain bool array."""
    mask = np.asarray(value_of(mask), dtype=bool)
    av, bv = value_of(a), value_of(b)
    val = np.where(mask, av, bv)
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return val
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(g * mask, np.shape(av)))
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(g * (~mask), np.shape(bv)))
    return Var._make(val, tuple(parents), tuple(vjps))


def vsum(x, axis=None):
    if isinstance(x, Var):
        val = np.sum(x.value, axis=axis)
        shape = np.shape(x.value)

        def vjp(g):
            if axis is None:
                return np.broadcast_to(g, shape).copy() if shape else g
            return np.broadcast_to(np.expand_dims(g, axis), shape).copy()

        return Var._make(val, (x,), (vjp,))
    return np.sum(x, axis=axis)


def vmean(x, axis=None):
    n = np.shape(value_of(x))
    if axis is None:
        count = int(np.prod(n)) if n else 1
    else:
        count = n[axis]
    return vsum(x, axis=axis) * (1.0 / count)


def matmul(a, b):
    if isinstance(a, Var):
        return a @ b
    if isinstance(b, Var):
        return b.__rmatmul__(a)
    return a @ b


def stack_cols(columns):
    """Stack 1-D columns into an (n, k) matrix."""
    vals = [value_of(c) for c in columns]
    out = np.column_stack(vals)
    if not any(isinstance(c, Var) for c in columns):
        return out
    parents, vjps = [], []
    for i, c in enumerate(columns):
        if isinstance(c, Var):
            parents.append(c)
            vjps.append(lambda g, i=i, shape=np.shape(vals[i]): _unbroadcast(g[:, i], shape))
    return Var._make(out, tuple(parents), tuple(vjps))


# -- reverse pass ----------------------------------------------------------


def backward(root: Var) -> None:
    """Accumulate gradients of the scalar ``root`` into its leaves.

    Gradients land on ``.grad`` of every reachable Var with
    ``requires_grad``; intermediate nodes keep theirs too (cheap, and handy
    for diagnostics).
    """
    if np.shape(root.value) != ():
        raise ValueError("backward expects a scalar root")
    # Iterative topological order (DFS) over the requires_grad subgraph.
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    root.grad = np.array(1.0)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = np.array(contrib, dtype=float, copy=True)
            else:
                parent.grad = parent.grad + contrib
