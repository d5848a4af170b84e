"""Graphs, normalized Laplacians and polynomial adjacency filters."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numkit import ops
from .numkit.errors import ContractError, DomainError, ShapeError
from .numkit.tape import Node, record, value_of

SYMMETRY_TOL = 1e-12
POWER_ITERATIONS = 50


@dataclass(frozen=True)
class Graph:
    """An undirected weighted graph held as a dense symmetric adjacency."""

    adj: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adj, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] == 0:
            raise ShapeError(f"adjacency must be a non-empty square matrix, got {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise DomainError("adjacency has non-finite entries")
        if np.max(np.abs(adj - adj.T)) > SYMMETRY_TOL:
            raise DomainError("adjacency is not symmetric")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build from ``[i, j, weight]`` triples; each edge is symmetrized."""
        adj = np.zeros((n, n))
        for i, j, w in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise ContractError(f"edge ({i}, {j}) out of range for {n} nodes")
            adj[i, j] = w
            adj[j, i] = w
        return cls(adj)

    def edges(self) -> list[list]:
        i, j = np.nonzero(np.triu(self.adj))
        return [[int(a), int(b), float(self.adj[a, b])] for a, b in zip(i, j)]


def degree(G: Graph) -> np.ndarray:
    return G.adj.sum(axis=1)


def normalized_laplacian(G: Graph) -> np.ndarray:
    """``I - D^{-1/2} A D^{-1/2}``; isolated nodes get a zero scaling."""
    d = degree(G)
    if np.any(d < 0):
        raise DomainError("negative node degree; normalized Laplacian undefined")
    inv_sqrt = np.zeros_like(d)
    pos = d > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(d[pos])
    return np.eye(G.n) - inv_sqrt[:, None] * G.adj * inv_sqrt[None, :]


BLOCK_SIZE = 8


def _start_block(n: int, b: int) -> np.ndarray:
    V = np.random.Generator(np.random.Philox(0)).standard_normal((n, b))
    return np.linalg.qr(V)[0]


def top_singular_pair(A: np.ndarray, iterations: int = POWER_ITERATIONS):
    """Block power iteration on ``A^T A`` from a fixed start; batched over leading axes.

    A block of ``min(n, 8)`` orthonormal vectors is iterated and the top
    Ritz pair of ``A^T A`` on the final block is returned as ``(sigma, v)``
    with ``v`` a unit vector and ``sigma = ||A v||``.  When the block spans
    the whole space the result is exact.  A single vector converges slowly
    when the two leading singular values are close.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[-1]
    b = min(n, BLOCK_SIZE)
    AT = np.swapaxes(A, -1, -2)
    V = np.broadcast_to(_start_block(n, b), A.shape[:-2] + (n, b)).copy()
    if b < n:
        for _ in range(iterations):
            V = np.linalg.qr(AT @ (A @ V))[0]
    AV = A @ V
    _, Y = np.linalg.eigh(np.swapaxes(AV, -1, -2) @ AV)
    v = (V @ Y[..., -1:])[..., 0]
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    sigma = np.linalg.norm((A @ v[..., None])[..., 0], axis=-1)
    return sigma, v


def spectral_norm_estimate(A) -> float:
    sigma, _ = top_singular_pair(np.asarray(A, dtype=np.float64))
    return float(sigma)


def spectral_rescale(G: Graph) -> Graph:
    """Divide the adjacency by ``max(1, sigma)`` so its powers stay bounded."""
    sigma = spectral_norm_estimate(G.adj)
    return Graph(G.adj / max(1.0, sigma))


def rescale_adjacency(a):
    """Differentiable ``A / max(1, sigma(A))`` for a (batch of) matrices.

    The singular vector from the power iteration is held fixed when
    differentiating; at convergence ``d sigma / dA = u v^T`` exactly.
    """
    A = value_of(a)
    sigma, v = top_singular_pair(A)
    active = sigma > 1.0
    denom = np.where(active, sigma, 1.0)[..., None, None]
    out = A / denom

    def vjp(g):
        grad = g / denom
        if np.any(active):
            Av = (A @ v[..., None])[..., 0]
            safe = np.where(active, sigma, 1.0)
            dsigma = Av[..., :, None] * v[..., None, :] / safe[..., None, None]
            coeff = np.sum(g * A, axis=(-2, -1)) / safe**2
            grad = grad - np.where(active[..., None, None], coeff[..., None, None] * dsigma, 0.0)
        return (grad,)

    return record(out, (a,), vjp)


def _adjacency(G) -> "np.ndarray | Node":
    return G.adj if isinstance(G, Graph) else G


def poly_filter(G, S, theta):
    """``sum_k theta[k] A^k S`` for ``k = 0..K`` by repeated products with ``A``.

    ``G`` may be a :class:`Graph`, an adjacency array, or a tape node (with
    optional batch axes); ``S`` is ``n x c`` (also batchable).
    """
    A = _adjacency(G)
    Av, Sv, tv = value_of(A), value_of(S), value_of(theta)
    if tv.ndim != 1 or tv.size < 1:
        raise ShapeError(f"theta must be a non-empty vector, got shape {tv.shape}")
    if Sv.ndim < 2 or Av.shape[-1] != Sv.shape[-2]:
        raise ShapeError(f"poly_filter: adjacency {Av.shape} does not match signal {Sv.shape}")
    terms = [S]
    for _ in range(1, tv.size):
        terms.append(ops.matmul(A, terms[-1]))
    return ops.weighted_sum(theta, terms)


def load_graph(path) -> Graph:
    """Read a JSON edge list ``{"n": .., "edges": [[i, j, w], ..]}`` or a dense CSV."""
    path = Path(path)
    if not path.exists():
        raise ContractError(f"graph file not found: {path}")
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text())
            return Graph.from_edges(int(doc["n"]), doc["edges"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ContractError(f"corrupt graph file {path}: {exc}") from None
    with path.open(newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    return Graph(np.array(rows))


def save_graph(path, G: Graph) -> Path:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps({"n": G.n, "edges": G.edges()}) + "\n")
    else:
        with path.open("w", newline="") as fh:
            csv.writer(fh).writerows([[repr(float(x)) for x in row] for row in G.adj])
    return path
