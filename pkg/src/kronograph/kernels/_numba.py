"""Loop kernels compiled with numba; same contract as ``_numpy``."""
from __future__ import annotations

import numpy as np

from ._jit import njit


@njit(cache=True)
def _apply_into(lam1, lam2, ax, ay, prev, cur):
    n2, n1 = prev.shape
    for r in range(n2):
        for i in range(n1):
            left = 0.0
            for j in range(n1):
                left += prev[r, j] * ax[i, j]
            right = 0.0
            for l in range(n2):
                right += ay[r, l] * prev[l, i]
            cur[r, i] = lam1[r] * left + lam2[i] * right


@njit(cache=True)
def _forward(theta, lam1, lam2, Ax, Ay, S, powers, out):
    B, C, n2, n1 = S.shape
    K1 = theta.shape[0]
    for b in range(B):
        ax = Ax[b if Ax.shape[0] > 1 else 0]
        ay = Ay[b if Ay.shape[0] > 1 else 0]
        for c in range(C):
            powers[b, 0, c] = S[b, c]
            for k in range(1, K1):
                _apply_into(lam1, lam2, ax, ay, powers[b, k - 1, c], powers[b, k, c])
            for r in range(n2):
                for i in range(n1):
                    acc = 0.0
                    for k in range(K1):
                        acc += theta[k] * powers[b, k, c, r, i]
                    out[b, c, r, i] = acc


@njit(cache=True)
def _backward(theta, lam1, lam2, Ax, Ay, powers, G, dtheta, dlam1, dlam2, dAx, dAy, dS):
    B, K1, C, n2, n1 = powers.shape
    g = np.empty((n2, n1))
    nxt = np.empty((n2, n1))
    for b in range(B):
        bx = b if Ax.shape[0] > 1 else 0
        by = b if Ay.shape[0] > 1 else 0
        ax = Ax[bx]
        ay = Ay[by]
        for c in range(C):
            Gc = G[b, c]
            for k in range(K1):
                acc = 0.0
                for r in range(n2):
                    for i in range(n1):
                        acc += Gc[r, i] * powers[b, k, c, r, i]
                dtheta[k] += acc
            for r in range(n2):
                for i in range(n1):
                    g[r, i] = theta[K1 - 1] * Gc[r, i]
            for k in range(K1 - 1, 0, -1):
                prev = powers[b, k - 1, c]
                for r in range(n2):
                    for i in range(n1):
                        left = 0.0
                        for j in range(n1):
                            left += prev[r, j] * ax[i, j]
                        right = 0.0
                        for l in range(n2):
                            right += ay[r, l] * prev[l, i]
                        dlam1[r] += g[r, i] * left
                        dlam2[i] += g[r, i] * right
                for i in range(n1):
                    for j in range(n1):
                        acc = 0.0
                        for r in range(n2):
                            acc += lam1[r] * g[r, i] * prev[r, j]
                        dAx[bx, i, j] += acc
                for r in range(n2):
                    for l in range(n2):
                        acc = 0.0
                        for i in range(n1):
                            acc += g[r, i] * lam2[i] * prev[l, i]
                        dAy[by, r, l] += acc
                for r in range(n2):
                    for i in range(n1):
                        left = 0.0
                        for j in range(n1):
                            left += g[r, j] * ax[j, i]
                        right = 0.0
                        for l in range(n2):
                            right += ay[l, r] * g[l, i] * lam2[i]
                        nxt[r, i] = theta[k - 1] * Gc[r, i] + lam1[r] * left + right
                for r in range(n2):
                    for i in range(n1):
                        g[r, i] = nxt[r, i]
            for r in range(n2):
                for i in range(n1):
                    dS[b, c, r, i] = g[r, i]


def cross_forward(theta, lam1, lam2, Ax, Ay, S):
    S = np.ascontiguousarray(S)
    B, C, n2, n1 = S.shape
    powers = np.empty((B, theta.shape[0], C, n2, n1))
    out = np.empty_like(S)
    _forward(np.ascontiguousarray(theta), np.ascontiguousarray(lam1), np.ascontiguousarray(lam2),
             np.ascontiguousarray(Ax), np.ascontiguousarray(Ay), S, powers, out)
    return out, powers


def cross_backward(theta, lam1, lam2, Ax, Ay, powers, G):
    dtheta = np.zeros(theta.shape[0])
    dlam1 = np.zeros(lam1.shape[0])
    dlam2 = np.zeros(lam2.shape[0])
    dAx = np.zeros(Ax.shape)
    dAy = np.zeros(Ay.shape)
    dS = np.empty(G.shape)
    _backward(np.ascontiguousarray(theta), np.ascontiguousarray(lam1), np.ascontiguousarray(lam2),
              np.ascontiguousarray(Ax), np.ascontiguousarray(Ay), powers, np.ascontiguousarray(G),
              dtheta, dlam1, dlam2, dAx, dAy, dS)
    return dtheta, dlam1, dlam2, dAx, dAy, dS
