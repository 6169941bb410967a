"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A computation builds a DAG of Node objects; backward() walks the graph once
in reverse topological order and accumulates adjoints into the .grad field
of every node that requires gradients. Only the primitives needed to express
the convex-network loss are provided; no broadcasting beyond what numpy does
between scalars, vectors and matrices of compatible shape.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError


class Node:
    """One value in the computation graph.

    value is fixed at construction; grad (same shape) is filled by backward.
    """

    __slots__ = ("value", "parents", "op", "requires_grad", "grad", "_vjps")

    def __init__(self, value, parents=(), op="leaf", requires_grad=False, vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = tuple(parents)
        self.op = op
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.grad = None
        self._vjps = vjps

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    # operator sugar; scalars are wrapped as constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


def constant(x):
    """Wrap an array as a non-differentiable graph input."""
    return Node(x, op="const")


def param(x):
    """Wrap an array as a differentiable leaf (a parameter)."""
    return Node(x, op="param", requires_grad=True)


def _as_node(x):
    return x if isinstance(x, Node) else constant(x)


def _unbroadcast(g, shape):
    """Reduce an adjoint back to the shape of the operand it belongs to."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = _as_node(a), _as_node(b)
    return Node(
        a.value + b.value,
        (a, b),
        "add",
        vjps=(
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(g, b.value.shape),
        ),
    )


def sub(a, b):
    a, b = _as_node(a), _as_node(b)
    return Node(
        a.value - b.value,
        (a, b),
        "sub",
        vjps=(
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(-g, b.value.shape),
        ),
    )


def mul(a, b):
    a, b = _as_node(a), _as_node(b)
    return Node(
        a.value * b.value,
        (a, b),
        "mul",
        vjps=(
            lambda g: _unbroadcast(g * b.value, a.value.shape),
            lambda g: _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b):
    a, b = _as_node(a), _as_node(b)
    return Node(
        a.value / b.value,
        (a, b),
        "div",
        vjps=(
            lambda g: _unbroadcast(g / b.value, a.value.shape),
            lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def matmul(a, b):
    a, b = _as_node(a), _as_node(b)
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise DimensionError(f"matmul: incompatible shapes {av.shape} @ {bv.shape}")
        vjps = (lambda g: g @ bv.T, lambda g: av.T @ g)
    elif av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise DimensionError(f"matmul: incompatible shapes {av.shape} @ {bv.shape}")
        vjps = (lambda g: np.outer(g, bv), lambda g: av.T @ g)
    elif av.ndim == 1 and bv.ndim == 2:
        if av.shape[0] != bv.shape[0]:
            raise DimensionError(f"matmul: incompatible shapes {av.shape} @ {bv.shape}")
        vjps = (lambda g: bv @ g, lambda g: np.outer(av, g))
    else:
        raise DimensionError(f"matmul: unsupported ranks {av.shape} @ {bv.shape}")
    return Node(av @ bv, (a, b), "matmul", vjps=vjps)


def dot(a, b):
    a, b = _as_node(a), _as_node(b)
    if a.value.ndim != 1 or b.value.ndim != 1 or a.value.shape != b.value.shape:
        raise DimensionError(f"dot: need equal-length vectors, got {a.value.shape}, {b.value.shape}")
    return Node(
        a.value @ b.value,
        (a, b),
        "dot",
        vjps=(lambda g: g * b.value, lambda g: g * a.value),
    )


def transpose(a):
    a = _as_node(a)
    if a.value.ndim != 2:
        raise DimensionError(f"transpose: need a matrix, got shape {a.value.shape}")
    return Node(a.value.T, (a,), "transpose", vjps=(lambda g: g.T,))


def sum_(a, axis=None, keepdims=False):
    a = _as_node(a)
    shape = a.value.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return Node(a.value.sum(axis=axis, keepdims=keepdims), (a,), "sum", vjps=(vjp,))


def mean_(a, axis=None, keepdims=False):
    a = _as_node(a)
    shape = a.value.shape
    count = a.value.size if axis is None else shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy() / count

    return Node(a.value.mean(axis=axis, keepdims=keepdims), (a,), "mean", vjps=(vjp,))


def log(a):
    a = _as_node(a)
    return Node(np.log(a.value), (a,), "log", vjps=(lambda g: g / a.value,))


def exp(a):
    a = _as_node(a)
    out = np.exp(a.value)
    return Node(out, (a,), "exp", vjps=(lambda g: g * out,))


def square(a):
    a = _as_node(a)
    return Node(a.value * a.value, (a,), "square", vjps=(lambda g: 2.0 * g * a.value,))


def sqrt(a):
    a = _as_node(a)
    out = np.sqrt(a.value)
    return Node(out, (a,), "sqrt", vjps=(lambda g: g / (2.0 * out),))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(a):
    a = _as_node(a)
    out = _sigmoid(np.atleast_1d(a.value)).reshape(a.value.shape)
    return Node(out, (a,), "sigmoid", vjps=(lambda g: g * out * (1.0 - out),))


def softplus(a):
    a = _as_node(a)
    sig = _sigmoid(np.atleast_1d(a.value)).reshape(a.value.shape)
    return Node(_softplus(a.value), (a,), "softplus", vjps=(lambda g: g * sig,))


def maximum(a, s):
    """Elementwise max with a scalar. Adjoint is zero where the input ties or loses."""
    a = _as_node(a)
    s = float(s)
    mask = a.value > s
    return Node(np.maximum(a.value, s), (a,), "maximum", vjps=(lambda g: g * mask,))


def reshape(a, shape):
    a = _as_node(a)
    if int(np.prod(shape)) != a.value.size:
        raise DimensionError(f"reshape: cannot view {a.value.shape} as {shape}")
    old = a.value.shape
    return Node(a.value.reshape(shape), (a,), "reshape", vjps=(lambda g: g.reshape(old),))


def l2norm(a, axis=None, keepdims=False):
    """Euclidean norm, built from primitives so it stays differentiable."""
    return sqrt(sum_(square(a), axis=axis, keepdims=keepdims))


def topo_order(output):
    """Topologically ordered node list for one forward evaluation (the tape)."""
    order = []
    seen = set()
    stack = [(output, iter(output.parents))]
    seen.add(id(output))
    while stack:
        node, it = stack[-1]
        advanced = False
        for parent in it:
            if id(parent) not in seen:
                seen.add(id(parent))
                stack.append((parent, iter(parent.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def backward(output):
    """Accumulate d(output)/d(node) into .grad for every node needing it.

    output must be scalar-valued. Each tape node is visited exactly once.
    """
    if output.value.size != 1:
        raise DimensionError(f"backward: output must be scalar, got shape {output.value.shape}")
    if not np.isfinite(output.value):
        raise NumericError("backward: output is not finite")
    order = topo_order(output)
    output.grad = np.ones_like(output.value)
    for node in reversed(order):
        if node.grad is None or not node.parents:
            continue
        for parent, vjp in zip(node.parents, node._vjps):
            if not parent.requires_grad:
                continue
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.array(contrib, dtype=np.float64, copy=True)
            else:
                parent.grad = parent.grad + contrib


def zero_grad(nodes):
    """Reset accumulated adjoints so a later backward starts fresh."""
    for node in nodes:
        node.grad = None
