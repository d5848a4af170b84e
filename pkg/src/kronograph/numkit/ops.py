"""Differentiable dense-matrix primitives.

Every function accepts :class:`~kronograph.numkit.tape.Node` operands or
plain arrays.  When at least one operand is a node the result is recorded
on that node's tape; otherwise a plain ``float64`` array comes back.

``vec`` and ``mat`` use column-major stacking: the columns of a ``p x q``
matrix are concatenated into a ``p*q`` vector.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .tape import Node, record, unbroadcast, value_of


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def _broadcast_shape(a: np.ndarray, b: np.ndarray, opname: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast") from None


def matmul(a, b):
    A, B = value_of(a), value_of(b)
    if A.ndim < 2 or B.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got ndim {A.ndim} and {B.ndim}")
    if A.shape[-1] != B.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ ({A.shape} @ {B.shape})")
    try:
        out = A @ B
    except ValueError as exc:
        raise ShapeError(f"matmul: {exc}") from None

    def vjp(g):
        return unbroadcast(g @ _swap(B), A.shape), unbroadcast(_swap(A) @ g, B.shape)

    return record(out, (a, b), vjp)


def add(a, b):
    A, B = value_of(a), value_of(b)
    _broadcast_shape(A, B, "add")

    def vjp(g):
        return unbroadcast(g, A.shape), unbroadcast(g, B.shape)

    return record(A + B, (a, b), vjp)


def sub(a, b):
    A, B = value_of(a), value_of(b)
    _broadcast_shape(A, B, "sub")

    def vjp(g):
        return unbroadcast(g, A.shape), unbroadcast(-g, B.shape)

    return record(A - B, (a, b), vjp)


def hadamard(a, b):
    A, B = value_of(a), value_of(b)
    _broadcast_shape(A, B, "hadamard")

    def vjp(g):
        return unbroadcast(g * B, A.shape), unbroadcast(g * A, B.shape)

    return record(A * B, (a, b), vjp)


def scale(x, alpha: float):
    X = value_of(x)
    alpha = float(alpha)
    return record(alpha * X, (x,), lambda g: (alpha * g,))


def tanh(x):
    X = value_of(x)
    out = np.tanh(X)
    return record(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x):
    X = value_of(x)
    # subgradient at 0 is 0
    mask = X > 0.0
    return record(np.where(mask, X, 0.0), (x,), lambda g: (g * mask,))


def identity(x):
    return x


ACTIVATIONS = {"tanh": tanh, "relu": relu, "identity": identity}


def activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ContractError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}") from None


def diag_scale_left(lam, x):
    """``diag(lam) @ x`` without forming the diagonal matrix."""
    L, X = value_of(lam), value_of(x)
    if X.ndim < 2 or L.shape[-1] != X.shape[-2]:
        raise ShapeError(f"diag_scale_left: vector {L.shape} does not match rows of {X.shape}")
    Le = L[..., :, None]

    def vjp(g):
        return unbroadcast((g * X).sum(axis=-1), L.shape), unbroadcast(g * Le, X.shape)

    return record(Le * X, (lam, x), vjp)


def diag_scale_right(x, lam):
    """``x @ diag(lam)`` without forming the diagonal matrix."""
    X, L = value_of(x), value_of(lam)
    if X.ndim < 2 or L.shape[-1] != X.shape[-1]:
        raise ShapeError(f"diag_scale_right: vector {L.shape} does not match columns of {X.shape}")
    Le = L[..., None, :]

    def vjp(g):
        return unbroadcast(g * Le, X.shape), unbroadcast((g * X).sum(axis=-2), L.shape)

    return record(X * Le, (x, lam), vjp)


def vec(x):
    """Stack the columns of ``x`` (``... x p x q``) into a ``... x p*q`` vector."""
    X = value_of(x)
    if X.ndim < 2:
        raise ShapeError(f"vec needs a matrix, got shape {X.shape}")
    p, q = X.shape[-2:]
    lead = X.shape[:-2]
    out = _swap(X).reshape(lead + (p * q,))
    return record(out, (x,), lambda g: (_swap(g.reshape(lead + (q, p))),))


def mat(v, p: int, q: int):
    """Inverse of :func:`vec`: reshape a ``p*q`` vector into ``p x q``."""
    V = value_of(v)
    if V.ndim < 1 or V.shape[-1] != p * q:
        raise ShapeError(f"mat: vector of length {V.shape[-1:]} cannot form a {p}x{q} matrix")
    lead = V.shape[:-1]
    out = _swap(V.reshape(lead + (q, p)))
    return record(out, (v,), lambda g: (_swap(g).reshape(lead + (p * q,)),))


def transpose(x):
    X = value_of(x)
    return record(_swap(X), (x,), lambda g: (_swap(g),))


def permute(x, axes: Sequence[int]):
    X = value_of(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record(np.transpose(X, axes), (x,), lambda g: (np.transpose(g, inverse),))


def reshape(x, shape: Sequence[int]):
    X = value_of(x)
    try:
        out = X.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    return record(out, (x,), lambda g: (g.reshape(X.shape),))


def broadcast_to(x, shape: Sequence[int]):
    X = value_of(x)
    try:
        out = np.broadcast_to(X, tuple(shape)).copy()
    except ValueError as exc:
        raise ShapeError(f"broadcast_to: {exc}") from None
    return record(out, (x,), lambda g: (unbroadcast(g, X.shape),))


def concat(xs: Sequence, axis: int = -1):
    vals = [value_of(x) for x in xs]
    try:
        out = np.concatenate(vals, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record(out, tuple(xs), vjp)


def weighted_sum(weights, terms: Sequence):
    """``sum_k weights[k] * terms[k]`` for a vector of scalar weights."""
    w = value_of(weights)
    vals = [value_of(t) for t in terms]
    if w.shape != (len(vals),):
        raise ShapeError(f"weighted_sum: {w.shape} weights for {len(vals)} terms")
    out = np.zeros(np.broadcast_shapes(*(v.shape for v in vals)))
    for wk, v in zip(w, vals):
        out = out + wk * v

    def vjp(g):
        gw = np.array([np.sum(g * v) for v in vals])
        return (gw,) + tuple(unbroadcast(wk * g, v.shape) for wk, v in zip(w, vals))

    return record(out, (weights, *terms), vjp)


def total(x):
    """Sum of all entries, as a 0-d array."""
    X = value_of(x)
    return record(np.asarray(X.sum()), (x,), lambda g: (np.broadcast_to(g, X.shape).copy(),))


def mean(x):
    X = value_of(x)
    return scale(total(x), 1.0 / X.size)


def softmax(x):
    X = value_of(x)
    z = X - X.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return record(p, (x,), vjp)


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of ``-log softmax(logits)[label]``."""
    Z = value_of(logits)
    y = np.asarray(labels, dtype=np.int64)
    if Z.ndim != 2 or y.shape != (Z.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {Z.shape} vs labels {y.shape}")
    C = Z.shape[1]
    if y.size and (y.min() < 0 or y.max() >= C):
        raise ContractError(f"labels must lie in [0, {C})")
    shifted = Z - Z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(Z.shape[0])
    loss = -logp[rows, y].mean()

    def vjp(g):
        d = np.exp(logp)
        d[rows, y] -= 1.0
        return (g * d / Z.shape[0],)

    return record(np.asarray(loss), (logits,), vjp)


def kron(a, b) -> np.ndarray:
    """Kronecker product ``a (x) b``; a reference construction, not differentiable.

    One-dimensional operands are treated as column vectors and a pair of
    them yields a one-dimensional result.
    """
    A, B = value_of(a), value_of(b)
    flat = A.ndim == 1 and B.ndim == 1
    A = A.reshape(-1, 1) if A.ndim == 1 else A
    B = B.reshape(-1, 1) if B.ndim == 1 else B
    p1, q1 = A.shape
    p2, q2 = B.shape
    out = (A[:, None, :, None] * B[None, :, None, :]).reshape(p1 * p2, q1 * q2)
    return out.ravel() if flat else out


def is_node(x) -> bool:
    return isinstance(x, Node)
