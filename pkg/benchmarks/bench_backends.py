"""Compare the numpy and numba kernel backends on the fused cross-graph filter.

Usage: python3 benchmarks/bench_backends.py [--repeats 20] [--batch 50]

Prints CSV rows ``backend,n1,n2,K,c,batch,op,median_ns`` for forward and
backward passes over a few preserving-layer-like shapes.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from kronograph import kernels
from kronograph.bench import median_ns

SHAPES = [(15, 8, 2, 9), (25, 50, 2, 9), (64, 64, 2, 1)]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--batch", type=int, default=50)
    args = ap.parse_args(argv)
    rng = np.random.Generator(np.random.Philox(0))
    print("backend,n1,n2,K,c,batch,op,median_ns")
    for n1, n2, K, c in SHAPES:
        B = args.batch
        theta = rng.uniform(-1, 1, K + 1)
        lam1, lam2 = rng.uniform(-1, 1, n2), rng.uniform(-1, 1, n1)
        Ax = rng.uniform(-1, 1, (1, n1, n1)) / n1
        Ay = rng.uniform(-1, 1, (B, n2, n2)) / n2
        S = rng.uniform(-1, 1, (B, c, n2, n1))
        G = rng.uniform(-1, 1, S.shape)
        for name in kernels.BACKENDS:
            if not kernels.backend_available(name):
                continue
            mod = kernels.load(name)
            _, powers = mod.cross_forward(theta, lam1, lam2, Ax, Ay, S)
            fwd = median_ns(lambda: mod.cross_forward(theta, lam1, lam2, Ax, Ay, S), args.repeats)
            bwd = median_ns(lambda: mod.cross_backward(theta, lam1, lam2, Ax, Ay, powers, G), args.repeats)
            for op, t in (("forward", fwd), ("backward", bwd)):
                print(f"{name},{n1},{n2},{K},{c},{B},{op},{t}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
