"""Minimal reverse-mode autodiff over float64 scalars and vectors.

A :class:`Tape` records every operation as it is evaluated; ``backward`` walks
the records in reverse and accumulates adjoints with vector-Jacobian products.
Only scalar/vector operands are supported, with scalar-to-vector broadcasting.

    >>> tape = Tape()
    >>> x = tape.variable(2.0)
    >>> y = x * log(x)
    >>> tape.backward(y)
    >>> round(float(x.adjoint), 4)
    1.6931
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import digamma, gammaln

from .errors import DomainError, UnsupportedOperationError

Vjp = Callable[[np.ndarray], np.ndarray]


class Var:
    __slots__ = ("tape", "node_id", "value", "_adj", "parents")
    __array_priority__ = 1000  # numpy defers to Var's reflected operators

    def __init__(self, tape: "Tape", node_id: int, value: np.ndarray, parents):
        self.tape = tape
        self.node_id = node_id
        self.value = value
        self._adj = None
        self.parents = parents

    @property
    def adjoint(self) -> np.ndarray:
        """d(root)/d(self) after the last backward pass; zero for non-ancestors."""
        return np.zeros_like(self.value) if self._adj is None else self._adj

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Var(id={self.node_id}, value={self.value!r})"

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
        return neg(self)

    def __pow__(self, exponent):
        if isinstance(exponent, Var) or exponent != 2:
            raise UnsupportedOperationError("only squaring (x ** 2) is differentiable on the tape")
        return mul(self, self)

    def __getitem__(self, index):
        return take(self, index)


class Tape:
    """Append-only record of operations; node ids are topologically ordered."""

    def __init__(self):
        self.nodes: list[Var] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, value, parents=()) -> Var:
        var = Var(self, len(self.nodes), np.asarray(value, dtype=np.float64), tuple(parents))
        self.nodes.append(var)
        return var

    def variable(self, value) -> Var:
        """Register a leaf (an input to differentiate with respect to)."""
        value = np.array(value, dtype=np.float64)
        if value.ndim > 1:
            raise UnsupportedOperationError("tape values must be scalars or vectors")
        return self._push(value)

    def zero_grad(self):
        for node in self.nodes:
            node._adj = None

    def backward(self, root: Var):
        """Fill ``adjoint`` on every node with d(root)/d(node); forward values are untouched."""
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.shape != ():
            raise ValueError(f"backward needs a scalar root, got shape {root.value.shape}")
        self.zero_grad()
        root._adj = np.ones_like(root.value)
        for node in reversed(self.nodes[: root.node_id + 1]):
            g = node._adj
            if g is None or not node.parents:
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                parent._adj = contrib if parent._adj is None else parent._adj + contrib


def _tape_of(*operands) -> Tape:
    for op in operands:
        if isinstance(op, Var):
            return op.tape
    raise UnsupportedOperationError("at least one operand must be a tape Var")


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    raise UnsupportedOperationError(f"cannot reduce gradient of shape {g.shape} to {shape}")


def _check_shapes(a, b):
    sa, sb = np.shape(a), np.shape(b)
    if sa != sb and sa != () and sb != ():
        raise ValueError(f"shape mismatch: {sa} vs {sb}")


def _binary(a, b, value, da: Vjp | None, db: Vjp | None) -> Var:
    tape = _tape_of(a, b)
    parents = []
    if isinstance(a, Var) and da is not None:
        parents.append((a, da))
    if isinstance(b, Var) and db is not None:
        parents.append((b, db))
    return tape._push(value, parents)


def add(a, b) -> Var:
    av, bv = _value(a), _value(b)
    _check_shapes(av, bv)
    return _binary(a, b, av + bv,
                   lambda g: _unbroadcast(g, av.shape),
                   lambda g: _unbroadcast(g, bv.shape))


def sub(a, b) -> Var:
    av, bv = _value(a), _value(b)
    _check_shapes(av, bv)
    return _binary(a, b, av - bv,
                   lambda g: _unbroadcast(g, av.shape),
                   lambda g: _unbroadcast(-g, bv.shape))


def mul(a, b) -> Var:
    av, bv = _value(a), _value(b)
    _check_shapes(av, bv)
    return _binary(a, b, av * bv,
                   lambda g: _unbroadcast(g * bv, av.shape),
                   lambda g: _unbroadcast(g * av, bv.shape))


def div(a, b) -> Var:
    av, bv = _value(a), _value(b)
    _check_shapes(av, bv)
    tape = _tape_of(a, b)
    if np.any(bv == 0.0):
        raise DomainError("division by zero", len(tape))
    out = av / bv
    return _binary(a, b, out,
                   lambda g: _unbroadcast(g / bv, av.shape),
                   lambda g: _unbroadcast(-g * out / bv, bv.shape))


def scale(x: Var, c) -> Var:
    """Multiply by a constant (scalar or same-shape array)."""
    return mul(x, np.asarray(c, dtype=np.float64))


def neg(x: Var) -> Var:
    return x.tape._push(-x.value, [(x, lambda g: -g)])


def log(x: Var) -> Var:
    if np.any(x.value <= 0.0):
        raise DomainError("log of a non-positive value", len(x.tape))
    xv = x.value
    return x.tape._push(np.log(xv), [(x, lambda g: g / xv)])


def exp(x: Var) -> Var:
    out = np.exp(x.value)
    return x.tape._push(out, [(x, lambda g: g * out)])


def lgamma(x: Var) -> Var:
    if np.any(x.value <= 0.0):
        raise DomainError("lgamma of a non-positive value", len(x.tape))
    xv = x.value
    return x.tape._push(gammaln(xv), [(x, lambda g: g * digamma(xv))])


def clip_min(x: Var, floor: float) -> Var:
    """``max(x, floor)``; gradient passes only where x is above the floor."""
    xv = x.value
    mask = (xv > floor).astype(np.float64)
    return x.tape._push(np.maximum(xv, floor), [(x, lambda g: g * mask)])


def sum(x: Var) -> Var:  # noqa: A001 - mirrors numpy naming
    shape = x.value.shape
    return x.tape._push(x.value.sum(), [(x, lambda g: np.broadcast_to(g, shape).copy())])


def dot(a, b) -> Var:
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape or av.ndim != 1:
        raise ValueError(f"dot needs equal-length vectors, got {av.shape} and {bv.shape}")
    return _binary(a, b, np.dot(av, bv), lambda g: g * bv, lambda g: g * av)


def take(x: Var, index) -> Var:
    """Select one entry (scalar result) or a subset (vector result)."""
    shape = x.value.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return out

    return x.tape._push(x.value[index], [(x, vjp)])


def concat(parts: Sequence) -> Var:
    """Join scalars and vectors into one vector."""
    tape = _tape_of(*parts)
    values = [np.atleast_1d(_value(p)) for p in parts]
    bounds = np.cumsum([0] + [len(v) for v in values])
    parents = []
    for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
        if isinstance(p, Var):
            shape = p.value.shape
            parents.append((p, lambda g, lo=lo, hi=hi, shape=shape: g[lo:hi].reshape(shape)))
    return tape._push(np.concatenate(values), parents)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_with_temperature(logits: Var, tau: float) -> Var:
    """``softmax(logits / tau)``; backward is the JVP ``(diag(s) - s s^T) v / tau``."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    s = _softmax(logits.value / tau)

    def vjp(g):
        return s * (g - np.dot(s, g)) / tau

    return logits.tape._push(s, [(logits, vjp)])


def softmax(logits: Var) -> Var:
    return softmax_with_temperature(logits, 1.0)


def log_softmax(logits: Var) -> Var:
    z = logits.value
    shifted = z - z.max()
    lse = np.log(np.exp(shifted).sum())
    out = shifted - lse
    s = np.exp(out)
    return logits.tape._push(out, [(logits, lambda g: g - s * g.sum())])


def straight_through(forward_value, relaxed: Var) -> Var:
    """Forward ``forward_value``; backward routes gradients unchanged to ``relaxed``."""
    forward_value = np.asarray(forward_value, dtype=np.float64)
    if forward_value.shape != relaxed.value.shape:
        raise ValueError("straight-through value must match the relaxed shape")
    return relaxed.tape._push(forward_value, [(relaxed, lambda g: g)])


def stop_gradient(x: Var) -> Var:
    return x.tape._push(x.value.copy())
