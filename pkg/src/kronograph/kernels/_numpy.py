"""Vectorised numpy kernels for the factorized cross-graph polynomial filter.

Shapes used throughout::

    theta (K+1,)   lam1 (n2,)   lam2 (n1,)
    Ax    (Bx, n1, n1)          Ay   (By, n2, n2)      Bx, By in {1, B}
    S     (B, C, n2, n1)        one matricized signal per channel

One application of the conjunctive adjacency to a matricized signal M is
``diag(lam1) M Ax^T + Ay M diag(lam2)``.
"""
from __future__ import annotations

import numpy as np


def _apply(lam1, lam2, AxT, Ay, M):
    return lam1[:, None] * (M @ AxT) + (Ay @ M) * lam2[None, :]


def cross_forward(theta, lam1, lam2, Ax, Ay, S):
    """Return ``(out, powers)`` with ``powers[:, k] = A^k S``."""
    B, C, n2, n1 = S.shape
    AxT = np.swapaxes(Ax, -1, -2)[:, None]
    Ayb = Ay[:, None]
    powers = np.empty((B, theta.shape[0], C, n2, n1))
    powers[:, 0] = S
    out = theta[0] * S
    for k in range(1, theta.shape[0]):
        powers[:, k] = _apply(lam1, lam2, AxT, Ayb, powers[:, k - 1])
        out = out + theta[k] * powers[:, k]
    return out, powers


def cross_backward(theta, lam1, lam2, Ax, Ay, powers, G):
    """Adjoint of :func:`cross_forward` for an output cotangent ``G``.

    Returns ``(dtheta, dlam1, dlam2, dAx, dAy, dS)``; ``dAx``/``dAy`` keep
    the batch extent of ``Ax``/``Ay``.
    """
    K1 = theta.shape[0]
    dtheta = np.array([np.sum(G * powers[:, k]) for k in range(K1)])
    Axb = Ax[:, None]
    AxT = np.swapaxes(Ax, -1, -2)[:, None]
    Ayb = Ay[:, None]
    AyT = np.swapaxes(Ay, -1, -2)[:, None]
    dlam1 = np.zeros_like(lam1)
    dlam2 = np.zeros_like(lam2)
    dAx = np.zeros((G.shape[0],) + Ax.shape[1:])
    dAy = np.zeros((G.shape[0],) + Ay.shape[1:])
    g = theta[K1 - 1] * G
    for k in range(K1 - 1, 0, -1):
        prev = powers[:, k - 1]
        dlam1 += np.einsum("bcri,bcri->r", g, prev @ AxT)
        dlam2 += np.einsum("bcri,bcri->i", g, Ayb @ prev)
        lg = lam1[:, None] * g
        gl = g * lam2[None, :]
        dAx += np.einsum("bcri,bcrj->bij", lg, prev)
        dAy += np.einsum("bcri,bcli->brl", gl, prev)
        g = theta[k - 1] * G + lg @ Axb + AyT @ gl
    if Ax.shape[0] == 1:
        dAx = dAx.sum(axis=0, keepdims=True)
    if Ay.shape[0] == 1:
        dAy = dAy.sum(axis=0, keepdims=True)
    return dtheta, dlam1, dlam2, dAx, dAy, g
