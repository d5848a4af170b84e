"""Dense versus factorized cross-graph filter timings.

The dense timing includes building the explicit ``(n1 n2) x (n1 n2)``
adjacency, because that is what the dense path costs per call.
"""
from __future__ import annotations

import csv
import io
import time

import numpy as np

from .crossgraph import DENSE_LIMIT, ParamKronFilter, cross_filter, dense_cross_filter, flop_estimate

COLUMNS = ("n1", "n2", "K", "c", "mode", "median_ns", "flops")
MODES = ("dense", "factorized")


def _instance(n1: int, n2: int, K: int, c: int, seed: int = 0):
    rng = np.random.Generator(np.random.Philox(seed))
    Ax = rng.uniform(-1, 1, (n1, n1))
    Ay = rng.uniform(-1, 1, (n2, n2))
    Ax, Ay = 0.5 * (Ax + Ax.T) / n1, 0.5 * (Ay + Ay.T) / n2
    filt = ParamKronFilter(rng.uniform(-1, 1, K + 1), rng.uniform(-1, 1, n2), rng.uniform(-1, 1, n1))
    S = rng.uniform(-1, 1, (n1 * n2, c))
    return filt, Ax, Ay, S


def median_ns(fn, repeats: int) -> int:
    fn()  # warm-up (allocation, backend compilation)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return int(np.median(samples))


def bench(n_list, K: int = 2, c: int = 1, repeats: int = 20, modes=MODES) -> list[dict]:
    """One row per ``(n, mode)`` with ``n1 = n2 = n``; dense rows are skipped above the oracle limit."""
    rows = []
    for n in n_list:
        filt, Ax, Ay, S = _instance(n, n, K, c)
        for mode in modes:
            if mode == "dense":
                if n * n > DENSE_LIMIT:
                    continue
                fn = lambda: dense_cross_filter(filt, Ax, Ay, S)  # noqa: E731
            else:
                fn = lambda: cross_filter(filt, Ax, Ay, S)  # noqa: E731
            rows.append({"n1": n, "n2": n, "K": K, "c": c, "mode": mode,
                         "median_ns": median_ns(fn, repeats), "flops": flop_estimate(n, n, K, c, mode)})
    return rows


def speedup(rows: list[dict], n: int) -> float:
    by_mode = {r["mode"]: r["median_ns"] for r in rows if r["n1"] == n}
    return by_mode["dense"] / by_mode["factorized"]


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
