"""Reverse-mode automatic differentiation over a small numpy primitive set.

The tape is define-by-run: every primitive applied to a `Var` produces a new
`Var` remembering its parents and a backward closure.  Plain ndarrays flow
through the same primitives untouched, so model code written against this
module runs in two modes: recorded (any input is a `Var`) and plain numpy
(no input is).  Constants never become tape nodes, which keeps graphs small.

`Var.backward()` visits nodes in reverse topological order exactly once and
accumulates adjoints into `Var.grad`.  Operations outside the primitive set
raise `CapabilityError` naming the offending op rather than silently
computing a wrong gradient.
"""

from __future__ import annotations

import numpy as np

from .errors import CapabilityError

__all__ = [
    "Var",
    "value_of",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "square",
    "absolute",
    "sum_all",
    "sum_axis",
    "mean_all",
    "reshape",
    "transpose",
    "concat",
    "stack",
    "take_rows",
    "log_softmax_rows",
]


class Var:
    """A tape node: a float64 array plus provenance for the backward pass."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    # Keep numpy from hijacking mixed expressions like `ndarray + Var`; the
    # reflected operator on Var must run instead.
    __array_ufunc__ = None
    __array_priority__ = 1000.0

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"

    def backward(self):
        """Seed this scalar node with adjoint 1 and propagate to all leaves."""
        if self.value.size != 1:
            raise CapabilityError("backward", "seed node must be scalar")
        order = _toposort(self)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Arithmetic operators delegate to the module-level primitives so that
    # Var-Var, Var-ndarray and ndarray-Var all land on the same tape code.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise CapabilityError("divide", "Var/Var division is not a primitive")
        return scale(self, 1.0 / float(other))

    def __rtruediv__(self, other):
        raise CapabilityError("divide", "division by a Var is not a primitive")

    def __pow__(self, p):
        if p == 2:
            return square(self)
        raise CapabilityError("power", f"exponent {p!r} (only 2 is recordable)")


def value_of(x):
    """The plain ndarray behind `x`, whether or not it is on the tape."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _is_var(*xs):
    return any(isinstance(x, Var) for x in xs)


def _toposort(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _accumulate(node, contribution):
    if node.grad is None:
        node.grad = np.array(contribution, dtype=np.float64, copy=True)
    else:
        node.grad += contribution


def _unbroadcast(g, shape):
    """Sum `g` back down to `shape` after a broadcasting forward op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---- binary primitives -------------------------------------------------


def matmul(a, b):
    if not _is_var(a, b):
        return np.asarray(a) @ np.asarray(b)
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise CapabilityError("matmul", f"ndim {av.ndim}x{bv.ndim} (2x2 required)")
    out = Var(av @ bv, parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def backward(g):
        if isinstance(a, Var):
            _accumulate(a, g @ bv.T)
        if isinstance(b, Var):
            _accumulate(b, av.T @ g)

    out._backward = backward
    return out


def add(a, b):
    if not _is_var(a, b):
        return np.asarray(a) + np.asarray(b)
    av, bv = value_of(a), value_of(b)
    out = Var(av + bv, parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def backward(g):
        if isinstance(a, Var):
            _accumulate(a, _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            _accumulate(b, _unbroadcast(g, bv.shape))

    out._backward = backward
    return out


def sub(a, b):
    if not _is_var(a, b):
        return np.asarray(a) - np.asarray(b)
    av, bv = value_of(a), value_of(b)
    out = Var(av - bv, parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def backward(g):
        if isinstance(a, Var):
            _accumulate(a, _unbroadcast(g, av.shape))
        if isinstance(b, Var):
            _accumulate(b, _unbroadcast(-g, bv.shape))

    out._backward = backward
    return out


def mul(a, b):
    """Elementwise (broadcasting) product; either side may be constant."""
    if not _is_var(a, b):
        return np.asarray(a) * np.asarray(b)
    av, bv = value_of(a), value_of(b)
    out = Var(av * bv, parents=tuple(x for x in (a, b) if isinstance(x, Var)))

    def backward(g):
        if isinstance(a, Var):
            _accumulate(a, _unbroadcast(g * bv, av.shape))
        if isinstance(b, Var):
            _accumulate(b, _unbroadcast(g * av, bv.shape))

    out._backward = backward
    return out


def scale(a, c):
    """Multiply by a python scalar constant."""
    c = float(c)
    if not isinstance(a, Var):
        return np.asarray(a) * c
    out = Var(a.value * c, parents=(a,))
    out._backward = lambda g: _accumulate(a, g * c)
    return out


def neg(a):
    return scale(a, -1.0)


# ---- elementwise nonlinearities ---------------------------------------


def relu(a):
    if not isinstance(a, Var):
        return np.maximum(np.asarray(a), 0.0)
    mask = a.value > 0.0
    out = Var(np.where(mask, a.value, 0.0), parents=(a,))
    out._backward = lambda g: _accumulate(a, g * mask)
    return out


def sigmoid(a):
    av = value_of(a)
    # Stable in both tails.
    s = np.where(av >= 0, 1.0 / (1.0 + np.exp(-np.abs(av))),
                 np.exp(-np.abs(av)) / (1.0 + np.exp(-np.abs(av))))
    if not isinstance(a, Var):
        return s
    out = Var(s, parents=(a,))
    out._backward = lambda g: _accumulate(a, g * s * (1.0 - s))
    return out


def exp(a):
    if not isinstance(a, Var):
        return np.exp(np.asarray(a))
    ev = np.exp(a.value)
    out = Var(ev, parents=(a,))
    out._backward = lambda g: _accumulate(a, g * ev)
    return out


def log(a):
    if not isinstance(a, Var):
        return np.log(np.asarray(a))
    out = Var(np.log(a.value), parents=(a,))
    out._backward = lambda g: _accumulate(a, g / a.value)
    return out


def square(a):
    if not isinstance(a, Var):
        return np.square(np.asarray(a))
    out = Var(a.value * a.value, parents=(a,))
    out._backward = lambda g: _accumulate(a, g * 2.0 * a.value)
    return out


def absolute(a):
    if not isinstance(a, Var):
        return np.abs(np.asarray(a))
    out = Var(np.abs(a.value), parents=(a,))
    out._backward = lambda g: _accumulate(a, g * np.sign(a.value))
    return out


# ---- reductions and shape ops -----------------------------------------


def sum_all(a):
    if not isinstance(a, Var):
        return np.asarray(a).sum()
    out = Var(a.value.sum(), parents=(a,))
    out._backward = lambda g: _accumulate(a, np.broadcast_to(g, a.value.shape))
    return out


def sum_axis(a, axis, keepdims=True):
    if not isinstance(a, Var):
        return np.asarray(a).sum(axis=axis, keepdims=keepdims)
    out_value = a.value.sum(axis=axis, keepdims=keepdims)
    out = Var(out_value, parents=(a,))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.value.shape))

    out._backward = backward
    return out


def mean_all(a):
    size = value_of(a).size
    return scale(sum_all(a), 1.0 / size)


def reshape(a, shape):
    if not isinstance(a, Var):
        return np.asarray(a).reshape(shape)
    old = a.value.shape
    out = Var(a.value.reshape(shape), parents=(a,))
    out._backward = lambda g: _accumulate(a, g.reshape(old))
    return out


def transpose(a):
    if not isinstance(a, Var):
        return np.asarray(a).T
    out = Var(a.value.T, parents=(a,))
    out._backward = lambda g: _accumulate(a, g.T)
    return out


def concat(parts, axis):
    if not _is_var(*parts):
        return np.concatenate([np.asarray(p) for p in parts], axis=axis)
    values = [value_of(p) for p in parts]
    sizes = [v.shape[axis] for v in values]
    out = Var(np.concatenate(values, axis=axis),
              parents=tuple(p for p in parts if isinstance(p, Var)))

    def backward(g):
        offset = 0
        for part, size in zip(parts, sizes):
            if isinstance(part, Var):
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + size)
                _accumulate(part, g[tuple(index)])
            offset += size

    out._backward = backward
    return out


def stack(parts):
    """Stack equal-shaped parts along a new leading axis."""
    if not _is_var(*parts):
        return np.stack([np.asarray(p) for p in parts], axis=0)
    values = [value_of(p) for p in parts]
    out = Var(np.stack(values, axis=0),
              parents=tuple(p for p in parts if isinstance(p, Var)))

    def backward(g):
        for i, part in enumerate(parts):
            if isinstance(part, Var):
                _accumulate(part, g[i])

    out._backward = backward
    return out


def take_rows(a, indices):
    indices = np.asarray(indices, dtype=np.intp)
    if not isinstance(a, Var):
        return np.asarray(a)[indices]
    out = Var(a.value[indices], parents=(a,))

    def backward(g):
        acc = np.zeros_like(a.value)
        np.add.at(acc, indices, g)
        _accumulate(a, acc)

    out._backward = backward
    return out


def log_softmax_rows(z):
    """Row-wise log-softmax, stable via a detached row maximum.

    The subtracted maximum is piecewise constant in the inputs, so treating
    it as a constant leaves gradients correct almost everywhere.
    """
    m = value_of(z).max(axis=1, keepdims=True)
    shifted = sub(z, m)
    denominator = log(sum_axis(exp(shifted), axis=1, keepdims=True))
    return sub(shifted, denominator)
