"""Synthetic datasets, skeleton augmentation transforms and dataset files.

Every generator is a pure function of its arguments and an integer seed.
Randomness comes from numpy's Philox 4x64 counter-based generator
(``np.random.Generator(np.random.Philox(seed))``), whose output stream is
identical on every platform.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numkit.errors import ContractError, ShapeError
from .spectral import Graph, load_graph, save_graph


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class SequenceSample:
    frames: np.ndarray  # (T, n, 3)
    graph: Graph
    label: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[1] != self.graph.n:
            raise ShapeError(f"frames {self.frames.shape} do not match a {self.graph.n}-node graph")
        if not np.all(np.isfinite(self.frames)):
            raise ContractError("frames contain non-finite coordinates")


@dataclass
class CompletionInstance:
    M: np.ndarray
    train_mask: np.ndarray
    test_mask: np.ndarray
    row_graph: Graph
    col_graph: Graph
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.train_mask = np.asarray(self.train_mask, dtype=bool)
        self.test_mask = np.asarray(self.test_mask, dtype=bool)
        m, n = self.M.shape
        if self.train_mask.shape != (m, n) or self.test_mask.shape != (m, n):
            raise ShapeError("masks must match the matrix shape")
        if np.any(self.train_mask & self.test_mask):
            raise ContractError("train and test masks overlap")
        if self.row_graph.n != m or self.col_graph.n != n:
            raise ShapeError("graph sizes must match the matrix shape")


def _cluster_labels(rng: np.random.Generator, size: int, clusters: int) -> np.ndarray:
    return rng.permutation(np.arange(size) % clusters)


def _cluster_graph(labels: np.ndarray) -> Graph:
    adj = (labels[:, None] == labels[None, :]).astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    return Graph(adj)


def gen_netflix(m: int, n: int, rank: int, clusters_r: int | None = None, clusters_c: int | None = None,
                density: float = 0.5, noise_sd: float = 0.0, seed: int = 0) -> CompletionInstance:
    """Low-rank matrix with community-structured row and column graphs.

    Row and column factors are constant within each cluster (cluster-level
    values are standard normal) plus Gaussian jitter of size ``noise_sd``.
    Same-cluster nodes are joined with unit weight.  Each entry enters the
    training mask with probability ``density``; the rest form the test mask.
    """
    clusters_r = clusters_r if clusters_r is not None else max(rank, 3)
    clusters_c = clusters_c if clusters_c is not None else max(rank, 3)
    if not 1 <= rank <= min(m, n):
        raise ContractError(f"rank must lie in [1, min(m, n)] = [1, {min(m, n)}]")
    if not 0.0 < density < 1.0:
        raise ContractError("density must lie strictly between 0 and 1")
    if not (1 <= clusters_r <= m and 1 <= clusters_c <= n):
        raise ContractError("cluster counts must be between 1 and the matching dimension")
    if noise_sd < 0:
        raise ContractError("noise_sd must be non-negative")
    rng = make_rng(seed)
    rows = _cluster_labels(rng, m, clusters_r)
    cols = _cluster_labels(rng, n, clusters_c)
    U = rng.standard_normal((clusters_r, rank))[rows] + noise_sd * rng.standard_normal((m, rank))
    V = rng.standard_normal((clusters_c, rank))[cols] + noise_sd * rng.standard_normal((n, rank))
    M = U @ V.T
    train = rng.random((m, n)) < density
    params = dict(m=m, n=n, rank=rank, clusters_r=clusters_r, clusters_c=clusters_c,
                  density=density, noise_sd=noise_sd, seed=seed)
    return CompletionInstance(M, train, ~train, _cluster_graph(rows), _cluster_graph(cols), params)


def tree_graph(n: int) -> Graph:
    """Binary tree over ``n`` joints: joint ``i > 0`` hangs off ``(i - 1) // 2``."""
    adj = np.zeros((n, n))
    for i in range(1, n):
        parent = (i - 1) // 2
        adj[i, parent] = adj[parent, i] = 1.0
    return Graph(adj)


def class_speeds(classes: int, T: int) -> np.ndarray:
    """Signed angular step per frame for each class.

    Classes come in pairs that turn the same pose loop in opposite
    directions: ``+w, -w, +2w, -2w, ...`` with ``w`` two full turns per sequence.
    """
    base = 4.0 * np.pi / T
    k = np.arange(classes)
    return np.where(k % 2 == 0, 1.0, -1.0) * (k // 2 + 1) * base


def gen_dynseq(num_samples: int, classes: int = 2, T: int = 12, n: int = 15, seed: int = 0,
               noise: float = 0.05) -> list[SequenceSample]:
    """Skeleton-like sequences whose class is visible only through frame order.

    Joints move around a rest pose ``P`` inside a dataset-wide 2-D pose
    subspace spanned by direction fields ``D1, D2``::

        x_t = P + a (cos(phase + w_c t) D1 + sin(phase + w_c t) D2) + noise

    Class 0 turns the loop one way and class 1 is its time reversal.  The
    start phase is uniform, so every frame has the same marginal law in every
    class, and a pair of opposite classes even shares the law of the unordered
    set of frames.  Only a model that sees temporal order can separate them.
    """
    if T < 2 or n < 4:
        raise ContractError("gen_dynseq needs T >= 2 and n >= 4")
    if classes < 2:
        raise ContractError("gen_dynseq needs at least two classes")
    rng = make_rng(seed)
    graph = tree_graph(n)
    rest = 0.5 * rng.standard_normal((n, 3))
    fields = rng.standard_normal((2, n, 3))
    fields /= np.sqrt(np.mean(np.sum(fields**2, axis=2), axis=1))[:, None, None]
    speeds = class_speeds(classes, T)
    labels = rng.permutation(np.arange(num_samples) % classes)
    t = np.arange(T)
    samples = []
    for label in labels:
        amp = rng.uniform(0.8, 1.2)
        angle = rng.uniform(0.0, 2.0 * np.pi) + speeds[label] * t
        motion = np.cos(angle)[:, None, None] * fields[0] + np.sin(angle)[:, None, None] * fields[1]
        frames = rest[None] + amp * motion + noise * rng.standard_normal((T, n, 3))
        samples.append(SequenceSample(frames, graph, int(label)))
    return samples


def stack_samples(samples: list[SequenceSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(frames (B, T, n, 3), adjacency, labels)``; a shared graph stays ``(n, n)``."""
    if not samples:
        raise ContractError("no samples to stack")
    frames = np.stack([s.frames for s in samples])
    first = samples[0].graph.adj
    if all(s.graph.adj is first or np.array_equal(s.graph.adj, first) for s in samples):
        adj = np.asarray(first)
    else:
        adj = np.stack([np.broadcast_to(s.graph.adj, (s.frames.shape[0],) + s.graph.adj.shape) for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return frames, adj, labels


def temporal_subsample(frames, T_out: int, mode: str = "deterministic", seed: int | None = None) -> np.ndarray:
    """Split into ``T_out`` contiguous bins and keep one frame per bin.

    ``deterministic`` keeps the middle frame of each bin, ``random`` a
    seeded-uniform frame.
    """
    frames = np.asarray(frames)
    T_in = frames.shape[0]
    if T_out < 1 or T_in < T_out:
        raise ContractError(f"cannot subsample {T_in} frames to {T_out}")
    edges = np.floor(np.linspace(0, T_in, T_out + 1)).astype(int)
    lo, hi = edges[:-1], edges[1:]
    if mode == "deterministic":
        idx = (lo + hi) // 2
    elif mode == "random":
        if seed is None:
            raise ContractError("random subsampling needs a seed")
        rng = make_rng(seed)
        idx = np.array([rng.integers(a, b) for a, b in zip(lo, hi)])
    else:
        raise ContractError(f"unknown subsample mode {mode!r}")
    return frames[idx]


def random_scale(frames, seed: int, low: float = 0.95, high: float = 1.05) -> tuple[np.ndarray, float]:
    """Multiply every coordinate by one factor drawn from ``U[low, high]``."""
    factor = float(make_rng(seed).uniform(low, high))
    return np.asarray(frames, dtype=np.float64) * factor, factor


def rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """``Rx(alpha) Ry(beta) Rz(gamma)``, angles in degrees."""
    a, b, g = np.deg2rad([alpha, beta, gamma])
    rx = np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])
    ry = np.array([[np.cos(b), 0, np.sin(b)], [0, 1, 0], [-np.sin(b), 0, np.cos(b)]])
    rz = np.array([[np.cos(g), -np.sin(g), 0], [np.sin(g), np.cos(g), 0], [0, 0, 1]])
    return rx @ ry @ rz


def random_rotate(frames, seed: int, max_deg: float = 45.0) -> tuple[np.ndarray, np.ndarray]:
    """Rotate every joint of every frame by one random rotation; returns ``(frames, R)``."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] != 3:
        raise ShapeError(f"rotation needs 3-D coordinates, got trailing size {frames.shape[-1]}")
    angles = make_rng(seed).uniform(-max_deg, max_deg, size=3)
    R = rotation_matrix(*angles)
    return frames @ R.T, R


def augment(sample: SequenceSample, seed: int, scale: bool = True, rotate: bool = True) -> SequenceSample:
    """Scale and rotate one sample; the label is untouched."""
    rng = make_rng(seed)
    frames = sample.frames
    if scale:
        frames, _ = random_scale(frames, int(rng.integers(2**62)))
    if rotate:
        frames, _ = random_rotate(frames, int(rng.integers(2**62)))
    return SequenceSample(frames, sample.graph, sample.label)


# ---- dataset files ---------------------------------------------------------

def save_sequences(path, samples: list[SequenceSample]) -> Path:
    """JSON-lines, one ``{label, n, T, frames}`` object per sample; ``frames``
    lists the ``T*n`` joint coordinates frame by frame."""
    path = Path(path)
    with path.open("w") as fh:
        for s in samples:
            T, n, _ = s.frames.shape
            rec = {"label": s.label, "n": n, "T": T, "frames": s.frames.reshape(T * n, 3).tolist()}
            fh.write(json.dumps(rec) + "\n")
    return path


def load_sequences(path, graph: Graph) -> list[SequenceSample]:
    path = Path(path)
    if not path.exists():
        raise ContractError(f"dataset file not found: {path}")
    samples = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            frames = np.asarray(rec["frames"], dtype=np.float64).reshape(rec["T"], rec["n"], 3)
            samples.append(SequenceSample(frames, graph, int(rec["label"])))
        except (KeyError, ValueError, TypeError) as exc:
            raise ContractError(f"{path}:{lineno}: corrupt sample ({exc})") from None
    return samples


def save_sequence_dataset(directory, train: list[SequenceSample], test: list[SequenceSample]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_graph(directory / "graph.json", train[0].graph)
    save_sequences(directory / "train.jsonl", train)
    save_sequences(directory / "test.jsonl", test)
    return directory


def load_sequence_dataset(directory) -> tuple[list[SequenceSample], list[SequenceSample]]:
    directory = Path(directory)
    graph = load_graph(directory / "graph.json")
    return load_sequences(directory / "train.jsonl", graph), load_sequences(directory / "test.jsonl", graph)


def _write_csv(path: Path, arr: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(x)) for x in row] for row in arr])


def _read_csv(path: Path) -> np.ndarray:
    if not path.exists():
        raise ContractError(f"missing file {path}")
    with path.open(newline="") as fh:
        try:
            return np.array([[float(x) for x in row] for row in csv.reader(fh) if row])
        except ValueError as exc:
            raise ContractError(f"corrupt CSV {path}: {exc}") from None


def save_completion(directory, inst: CompletionInstance) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_csv(directory / "M.csv", inst.M)
    _write_csv(directory / "train_mask.csv", inst.train_mask.astype(np.float64))
    _write_csv(directory / "test_mask.csv", inst.test_mask.astype(np.float64))
    save_graph(directory / "row_graph.json", inst.row_graph)
    save_graph(directory / "col_graph.json", inst.col_graph)
    return directory


def load_completion(directory) -> CompletionInstance:
    directory = Path(directory)
    return CompletionInstance(
        _read_csv(directory / "M.csv"),
        _read_csv(directory / "train_mask.csv") > 0.5,
        _read_csv(directory / "test_mask.csv") > 0.5,
        load_graph(directory / "row_graph.json"),
        load_graph(directory / "col_graph.json"),
    )
