"""Cross-graph convolution over the parameterized Kronecker sum.

Two graphs ``Gx`` (``n1`` nodes) and ``Gy`` (``n2`` nodes) induce a
conjunctive graph on ``n1*n2`` nodes with adjacency::

    A = Ax (x) diag(lam1) + diag(lam2) (x) Ay,   lam1 in R^n2, lam2 in R^n1

Node ``i*n2 + k`` pairs node ``i`` of ``Gx`` with node ``k`` of ``Gy``.  A
conjunctive signal column ``s`` is handled in matricized form
``M = mat(s)`` of shape ``n2 x n1``, on which ``A`` acts as::

    mat(A s) = diag(lam1) M Ax^T + Ay M diag(lam2)

so the ``(n1*n2)^2`` matrix is never formed on the fast path.  The explicit
construction (:func:`kron_sum_dense`) exists only as a reference for
verification and refuses problems above :data:`DENSE_LIMIT` nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numkit import ops
from .numkit.errors import ContractError, ShapeError
from .numkit.tape import record, unbroadcast, value_of
from .spectral import Graph, poly_filter

DENSE_LIMIT = 4096


@dataclass
class ParamKronFilter:
    """Polynomial coefficients and the two diagonal Kronecker-sum weights."""

    theta: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.lambda1 = np.asarray(self.lambda1, dtype=np.float64)
        self.lambda2 = np.asarray(self.lambda2, dtype=np.float64)
        for name in ("theta", "lambda1", "lambda2"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.size == 0:
                raise ShapeError(f"{name} must be a non-empty vector, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"{name} has non-finite entries")

    @classmethod
    def init(cls, K: int, n1: int, n2: int) -> "ParamKronFilter":
        """Identity filter over the classic Kronecker sum."""
        theta = np.zeros(K + 1)
        theta[0] = 1.0
        return cls(theta, np.ones(n2), np.ones(n1))

    @property
    def K(self) -> int:
        return self.theta.size - 1

    @property
    def n1(self) -> int:
        return self.lambda2.size

    @property
    def n2(self) -> int:
        return self.lambda1.size


@dataclass(frozen=True)
class ConjunctiveSignal:
    """``(n1*n2) x (c1+c2)`` signal; the first ``split`` columns come from x."""

    value: np.ndarray
    split: int

    @property
    def x_part(self) -> np.ndarray:
        return self.value[:, : self.split]

    @property
    def y_part(self) -> np.ndarray:
        return self.value[:, self.split:]


def conjunctive_signal(X, Y) -> ConjunctiveSignal:
    """Columns ``X[:, j] (x) 1_n2`` followed by ``1_n1 (x) Y[:, j]``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    n1, n2 = X.shape[0], Y.shape[0]
    xs = np.repeat(X, n2, axis=0)
    ys = np.tile(Y, (n1, 1))
    return ConjunctiveSignal(np.hstack([xs, ys]), X.shape[1])


def conjunctive_mat(X, Y):
    """Differentiable conjunctive signal in matricized channel-first form.

    ``X`` is ``(..., n1, c1)`` and ``Y`` is ``(..., n2, c2)``; the result is
    ``(..., c1 + c2, n2, n1)`` where channel ``j < c1`` is ``mat(X[:, j] (x) 1)``
    (constant down each column) and the remaining channels are
    ``mat(1 (x) Y[:, j])`` (constant along each row).
    """
    Xv, Yv = value_of(X), value_of(Y)
    n1, c1 = Xv.shape[-2:]
    n2, c2 = Yv.shape[-2:]
    lead = np.broadcast_shapes(Xv.shape[:-2], Yv.shape[:-2])
    xpart = np.broadcast_to(np.swapaxes(Xv, -1, -2)[..., :, None, :], lead + (c1, n2, n1))
    ypart = np.broadcast_to(np.swapaxes(Yv, -1, -2)[..., :, :, None], lead + (c2, n2, n1))
    out = np.concatenate([xpart, ypart], axis=-3)

    def vjp(g):
        gx = np.swapaxes(g[..., :c1, :, :].sum(axis=-2), -1, -2)
        gy = np.swapaxes(g[..., c1:, :, :].sum(axis=-1), -1, -2)
        return unbroadcast(gx, Xv.shape), unbroadcast(gy, Yv.shape)

    return record(out, (X, Y), vjp)


def to_mat_channels(S, n1: int, n2: int):
    """``(..., n1*n2, c)`` column signals to ``(..., c, n2, n1)`` matricized form."""
    Sv = value_of(S)
    if Sv.shape[-2] != n1 * n2:
        raise ShapeError(f"signal has {Sv.shape[-2]} rows, expected n1*n2 = {n1 * n2}")
    lead = Sv.shape[:-2]
    c = Sv.shape[-1]
    t = ops.reshape(S, lead + (n1, n2, c))
    nd = len(lead)
    return ops.permute(t, tuple(range(nd)) + (nd + 2, nd + 1, nd))


def from_mat_channels(M):
    """Inverse of :func:`to_mat_channels`."""
    Mv = value_of(M)
    lead = Mv.shape[:-3]
    c, n2, n1 = Mv.shape[-3:]
    nd = len(lead)
    t = ops.permute(M, tuple(range(nd)) + (nd + 2, nd + 1, nd))
    return ops.reshape(t, lead + (n1 * n2, c))


def _check_lambdas(lam1: np.ndarray, lam2: np.ndarray, n1: int, n2: int) -> None:
    if lam1.shape != (n2,) or lam2.shape != (n1,):
        raise ShapeError(f"lambda1 must have length n2={n2} and lambda2 length n1={n1}; "
                         f"got {lam1.shape} and {lam2.shape}")


def _adj(G):
    return G.adj if isinstance(G, Graph) else G


def kron_sum_dense(Gx, Gy, lambda1, lambda2) -> np.ndarray:
    """Explicit ``Ax (x) diag(lambda1) + diag(lambda2) (x) Ay`` (reference only)."""
    Ax, Ay = np.asarray(value_of(_adj(Gx))), np.asarray(value_of(_adj(Gy)))
    lam1 = np.asarray(value_of(lambda1), dtype=np.float64)
    lam2 = np.asarray(value_of(lambda2), dtype=np.float64)
    n1, n2 = Ax.shape[0], Ay.shape[0]
    _check_lambdas(lam1, lam2, n1, n2)
    if n1 * n2 > DENSE_LIMIT:
        raise ContractError(f"dense conjunctive adjacency refused: {n1 * n2} nodes exceeds {DENSE_LIMIT}")
    return ops.kron(Ax, np.diag(lam1)) + ops.kron(np.diag(lam2), Ay)


def cross_mat_apply(lambda1, lambda2, Ax, Ay, M):
    """``diag(lambda1) M Ax^T + Ay M diag(lambda2)`` built from tape primitives."""
    left = ops.diag_scale_left(lambda1, ops.matmul(M, ops.transpose(Ax)))
    right = ops.diag_scale_right(ops.matmul(Ay, M), lambda2)
    return ops.add(left, right)


def cross_matvec(filt: ParamKronFilter | tuple, Gx, Gy, s):
    """``A s`` for the conjunctive adjacency, without forming ``A``.

    ``filt`` is a :class:`ParamKronFilter` or a ``(lambda1, lambda2)`` pair
    (arrays or tape nodes).  ``s`` is an ``n1*n2`` vector.
    """
    lam1, lam2 = (filt.lambda1, filt.lambda2) if isinstance(filt, ParamKronFilter) else filt
    Ax, Ay = _adj(Gx), _adj(Gy)
    n1, n2 = value_of(Ax).shape[-1], value_of(Ay).shape[-1]
    _check_lambdas(value_of(lam1), value_of(lam2), n1, n2)
    if value_of(s).shape[-1] != n1 * n2:
        raise ShapeError(f"cross_matvec: vector length {value_of(s).shape[-1]} != n1*n2 = {n1 * n2}")
    M = ops.mat(s, n2, n1)
    return ops.vec(cross_mat_apply(lam1, lam2, Ax, Ay, M))


def cross_filter_mat(theta, lambda1, lambda2, Ax, Ay, S):
    """Fused ``sum_k theta_k A^k`` on matricized channels ``S`` of shape ``(..., c, n2, n1)``.

    Every operand may be a tape node; the gradient flows to ``theta``, both
    lambdas, both adjacencies and ``S``.  ``Ax``/``Ay`` either carry the same
    leading batch axes as ``S`` or none.
    """
    tv, l1, l2 = value_of(theta), value_of(lambda1), value_of(lambda2)
    Axv, Ayv, Sv = value_of(Ax), value_of(Ay), value_of(S)
    if Sv.ndim < 3:
        raise ShapeError(f"matricized signal needs shape (..., c, n2, n1), got {Sv.shape}")
    lead = Sv.shape[:-3]
    c, n2, n1 = Sv.shape[-3:]
    if tv.ndim != 1 or tv.size == 0:
        raise ShapeError(f"theta must be a non-empty vector, got {tv.shape}")
    _check_lambdas(l1, l2, n1, n2)
    if Axv.shape[-2:] != (n1, n1) or Ayv.shape[-2:] != (n2, n2):
        raise ShapeError(f"adjacencies {Axv.shape}, {Ayv.shape} do not match signal grid {n2}x{n1}")
    for name, arr in (("Ax", Axv), ("Ay", Ayv)):
        if arr.shape[:-2] not in ((), lead):
            raise ShapeError(f"{name} batch axes {arr.shape[:-2]} must be empty or {lead}")
    B = int(np.prod(lead)) if lead else 1
    S4 = Sv.reshape((B, c, n2, n1))
    Ax3 = Axv.reshape((-1, n1, n1))
    Ay3 = Ayv.reshape((-1, n2, n2))
    out, powers = kernels.cross_forward(tv, l1, l2, Ax3, Ay3, S4)

    def vjp(g):
        dth, dl1, dl2, dAx, dAy, dS = kernels.cross_backward(tv, l1, l2, Ax3, Ay3, powers, g.reshape(S4.shape))
        return dth, dl1, dl2, dAx.reshape(Axv.shape), dAy.reshape(Ayv.shape), dS.reshape(Sv.shape)

    return record(out.reshape(Sv.shape), (theta, lambda1, lambda2, Ax, Ay, S), vjp)


def cross_filter(filt: ParamKronFilter | tuple, Gx, Gy, S):
    """``sum_k theta_k A^k S`` for an ``(n1*n2) x c`` signal ``S``.

    Operands stay in ``n2 x n1`` matricized form through the whole
    recurrence and are vectorized once at the end.  ``filt`` is a
    :class:`ParamKronFilter` or a ``(theta, lambda1, lambda2)`` triple.
    """
    if isinstance(filt, ParamKronFilter):
        theta, lam1, lam2 = filt.theta, filt.lambda1, filt.lambda2
    else:
        theta, lam1, lam2 = filt
    Ax, Ay = _adj(Gx), _adj(Gy)
    n1, n2 = value_of(Ax).shape[-1], value_of(Ay).shape[-1]
    Sv = value_of(S)
    if Sv.ndim < 2 or Sv.shape[-2] != n1 * n2:
        raise ShapeError(f"cross_filter: signal {Sv.shape} does not have n1*n2 = {n1 * n2} rows")
    M = to_mat_channels(S, n1, n2)
    return from_mat_channels(cross_filter_mat(theta, lam1, lam2, Ax, Ay, M))


def dense_cross_filter(filt: ParamKronFilter, Gx, Gy, S) -> np.ndarray:
    """Reference path: explicit conjunctive adjacency, then the polynomial filter."""
    A = kron_sum_dense(Gx, Gy, filt.lambda1, filt.lambda2)
    return poly_filter(A, np.asarray(S, dtype=np.float64), filt.theta)


def flop_estimate(n1: int, n2: int, K: int, c: int, mode: str) -> int:
    """Multiply count of a ``K``-th order filter on ``c`` channels."""
    if min(n1, n2, c) < 1 or K < 0:
        raise ContractError("flop_estimate needs positive sizes and K >= 0")
    if mode == "dense":
        per = (n1 * n2) ** 2
    elif mode == "factorized":
        per = n2 * n1 * n1 + n1 * n2 * n2 + 2 * n1 * n2
    else:
        raise ContractError(f"unknown mode {mode!r}; expected 'dense' or 'factorized'")
    return int(per * K * c)
