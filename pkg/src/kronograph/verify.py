"""Invariant suites run by ``kronograph verify``.

Each suite returns ``(passed, detail)``; ``run_all`` prints a table and the
command exits 0 only when every suite passes.  The suites are also the
building blocks of the acceptance tests.
"""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import datagen, kernels
from .crossgraph import ParamKronFilter, cross_filter, cross_matvec, dense_cross_filter, kron_sum_dense
from .models import ClassifierConfig, ClassifierModel
from .numkit import ops
from .numkit.tape import Params, Tape
from .preserving import LayerConfig, PreservingLayer, dense_step, init_params
from .spectral import Graph, normalized_laplacian, poly_filter, spectral_rescale

ORACLE_TOL = 1e-10
CLASSIC_TOL = 1e-14
PRIMITIVE_GRAD_TOL = 1e-5
LAYER_GRAD_TOL = 1e-4
STEP_TOL = 1e-10
FD_STEP = 1e-6
REL_FLOOR = 1e-7

Suite = Callable[[], tuple[bool, str]]


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.uniform(-1.0, 1.0, (n, n))
    return 0.5 * (a + a.T)


def relative_error(approx: np.ndarray, exact: np.ndarray, floor: float = REL_FLOOR) -> float:
    """``max |approx - exact| / max(max |exact|, floor)``."""
    scale = max(float(np.max(np.abs(exact), initial=0.0)), floor)
    return float(np.max(np.abs(approx - exact), initial=0.0)) / scale


def gradient_errors(loss_fn: Callable, params: Params, h: float = FD_STEP) -> dict[str, float]:
    """Relative error of tape gradients against central differences, per parameter.

    ``loss_fn(source)`` must build a scalar loss reading parameters through
    ``source`` (a :class:`Tape` or the :class:`Params` themselves).
    """
    tape = Tape(params)
    grads = tape.backward(loss_fn(tape))
    errors = {}
    for name in params.trainable():
        base = params[name]
        fd = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            probe = params.copy()
            for sign in (1.0, -1.0):
                shifted = base.copy()
                shifted[idx] += sign * h
                probe[name] = shifted
                fd[idx] += sign * float(np.asarray(loss_fn(probe)))
            fd[idx] /= 2.0 * h
        errors[name] = relative_error(grads[name], fd)
    return errors


# ---- numkit -------------------------------------------------------------------

def suite_numkit() -> tuple[bool, str]:
    rng = rng_for(101)
    worst = {"roundtrip": 0.0, "matricization": 0.0, "kron": 0.0, "grad": 0.0}
    for _ in range(50):
        p, q, r = rng.integers(2, 7, size=3)
        X = rng.uniform(-1, 1, (p, q))
        worst["roundtrip"] = max(worst["roundtrip"], float(np.max(np.abs(ops.mat(ops.vec(X), p, q) - X))))
        A = rng.uniform(-1, 1, (p, p))
        B = rng.uniform(-1, 1, (q, r))
        lhs = ops.kron(B.T, A) @ ops.vec(X)
        rhs = ops.vec(A @ X @ B)
        worst["matricization"] = max(worst["matricization"], relative_error(lhs, rhs))
    worst["kron"] = float(np.max(np.abs(ops.kron(np.eye(3), np.eye(4)) - np.eye(12))))
    unary = {
        "tanh": ops.tanh, "relu": ops.relu, "vec": ops.vec, "transpose": ops.transpose,
        "scale": lambda x: ops.scale(x, -1.7), "softmax": ops.softmax,
    }
    for name, fn in unary.items():
        X = rng.uniform(-1, 1, (3, 4))
        if name == "relu":
            X[np.abs(X) < 1e-3] = 0.5  # keep away from the kink
        W = rng.uniform(-1, 1, np.shape(fn(X)))
        params = Params({"x": X})
        errs = gradient_errors(lambda s: ops.total(ops.hadamard(fn(_get(s, "x")), W)), params)
        worst["grad"] = max(worst["grad"], max(errs.values()))
    binary = {
        "matmul": (ops.matmul, (3, 4), (4, 2)), "add": (ops.add, (3, 4), (3, 4)),
        "sub": (ops.sub, (3, 4), (3, 4)), "hadamard": (ops.hadamard, (3, 4), (3, 4)),
        "diag_left": (ops.diag_scale_left, (3,), (3, 4)), "diag_right": (ops.diag_scale_right, (3, 4), (4,)),
    }
    for name, (fn, sa, sb) in binary.items():
        params = Params({"a": rng.uniform(-1, 1, sa), "b": rng.uniform(-1, 1, sb)})
        W = rng.uniform(-1, 1, np.shape(fn(params["a"], params["b"])))
        errs = gradient_errors(lambda s: ops.total(ops.hadamard(fn(_get(s, "a"), _get(s, "b")), W)), params)
        worst["grad"] = max(worst["grad"], max(errs.values()))
    ok = (worst["roundtrip"] == 0.0 and worst["matricization"] <= 1e-12 and worst["kron"] == 0.0
          and worst["grad"] <= PRIMITIVE_GRAD_TOL)
    return ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items())


def _get(source, name):
    return source.param(name) if isinstance(source, Tape) else source[name]


# ---- spectral -----------------------------------------------------------------

def suite_spectral() -> tuple[bool, str]:
    rng = rng_for(202)
    worst_lin = worst_pow = worst_lap = 0.0
    max_norm = 0.0
    for _ in range(30):
        n = int(rng.integers(2, 9))
        A = np.abs(random_symmetric(rng, n)) + 0.01
        np.fill_diagonal(A, 0.0)
        G = Graph(A)
        L = normalized_laplacian(G)
        d = A.sum(axis=1)
        worst_lap = max(worst_lap, float(np.max(np.abs(L - L.T))), float(np.max(np.abs(L @ np.sqrt(d)))))
        S1, S2 = rng.uniform(-1, 1, (2, n, 2))
        theta = rng.uniform(-1, 1, 4)
        a, b = rng.uniform(-2, 2, 2)
        lhs = poly_filter(G, a * S1 + b * S2, theta)
        rhs = a * poly_filter(G, S1, theta) + b * poly_filter(G, S2, theta)
        worst_lin = max(worst_lin, relative_error(lhs, rhs, 1.0))
        for k in range(5):
            onehot = np.zeros(k + 1)
            onehot[k] = 1.0
            worst_pow = max(worst_pow, relative_error(poly_filter(G, S1, onehot),
                                                      np.linalg.matrix_power(A, k) @ S1, 1.0))
        B = random_symmetric(rng, 5) * 4.0
        max_norm = max(max_norm, float(np.max(np.abs(np.linalg.eigvalsh(spectral_rescale(Graph(B)).adj)))))
    ok = worst_lin <= 1e-12 and worst_pow <= 1e-12 and worst_lap <= 1e-12 and max_norm <= 1 + 1e-6
    return ok, f"linearity={worst_lin:.1e}, powers={worst_pow:.1e}, laplacian={worst_lap:.1e}, rescaled_norm={max_norm:.6f}"


# ---- crossgraph ---------------------------------------------------------------

def random_filter_instance(rng: np.random.Generator):
    n1, n2 = (int(v) for v in rng.integers(2, 9, size=2))
    K = int(rng.integers(0, 5))
    c = int(rng.integers(1, 4))
    filt = ParamKronFilter(rng.uniform(-1, 1, K + 1), rng.uniform(-1, 1, n2), rng.uniform(-1, 1, n1))
    Ax, Ay = random_symmetric(rng, n1), random_symmetric(rng, n2)
    S = rng.uniform(-1, 1, (n1 * n2, c))
    return filt, Ax, Ay, S


def oracle_errors(instances: int = 200, seed: int = 303) -> tuple[float, float]:
    """Worst relative error of ``cross_filter`` and ``cross_matvec`` against the dense path."""
    rng = rng_for(seed)
    worst_filter = worst_matvec = 0.0
    for _ in range(instances):
        filt, Ax, Ay, S = random_filter_instance(rng)
        dense = dense_cross_filter(filt, Ax, Ay, S)
        fast = cross_filter(filt, Ax, Ay, S)
        worst_filter = max(worst_filter, float(np.max(np.abs(fast - dense))) / (1.0 + float(np.max(np.abs(dense)))))
        A = kron_sum_dense(Ax, Ay, filt.lambda1, filt.lambda2)
        mv = cross_matvec(filt, Ax, Ay, S[:, 0])
        ref = A @ S[:, 0]
        worst_matvec = max(worst_matvec, float(np.max(np.abs(mv - ref))) / (1.0 + float(np.max(np.abs(ref)))))
    return worst_filter, worst_matvec


def suite_oracle() -> tuple[bool, str]:
    start = time.perf_counter()
    wf, wm = oracle_errors()
    elapsed = time.perf_counter() - start
    return wf <= ORACLE_TOL and wm <= ORACLE_TOL, f"200 instances, filter={wf:.1e}, matvec={wm:.1e}, {elapsed:.2f}s"


def classic_reduction_error(seed: int = 404, instances: int = 50) -> tuple[float, float]:
    """Worst gap to the ``kron``-built classic sum, and worst asymmetry of the parameterized sum."""
    rng = rng_for(seed)
    worst_gap = worst_asym = 0.0
    for _ in range(instances):
        n1, n2 = (int(v) for v in rng.integers(1, 9, size=2))
        Ax, Ay = random_symmetric(rng, n1), random_symmetric(rng, n2)
        ours = kron_sum_dense(Ax, Ay, np.ones(n2), np.ones(n1))
        classic = ops.kron(Ax, np.eye(n2)) + ops.kron(np.eye(n1), Ay)
        worst_gap = max(worst_gap, float(np.max(np.abs(ours - classic))))
        P = kron_sum_dense(Ax, Ay, rng.uniform(-1, 1, n2), rng.uniform(-1, 1, n1))
        worst_asym = max(worst_asym, float(np.max(np.abs(P - P.T))))
    return worst_gap, worst_asym


def suite_classic() -> tuple[bool, str]:
    gap, asym = classic_reduction_error()
    return gap <= CLASSIC_TOL and asym == 0.0, f"classic gap={gap:.1e}, asymmetry={asym:.1e}"


def suite_cross_gradients() -> tuple[bool, str]:
    rng = rng_for(505)
    worst = 0.0
    for _ in range(10):
        filt, Ax, Ay, S = random_filter_instance(rng)
        W = rng.uniform(-1, 1, S.shape)
        params = Params({"theta": filt.theta, "lambda1": filt.lambda1, "lambda2": filt.lambda2, "S": S})

        def loss(src):
            out = cross_filter((_get(src, "theta"), _get(src, "lambda1"), _get(src, "lambda2")), Ax, Ay,
                               _get(src, "S"))
            return ops.total(ops.hadamard(out, W))

        worst = max(worst, max(gradient_errors(loss, params).values()))
    return worst <= PRIMITIVE_GRAD_TOL, f"worst relative error={worst:.1e}"


# ---- preserving ------------------------------------------------------------------

def step_equivalence_error(seed: int = 606, instances: int = 30) -> tuple[float, float]:
    """Worst gap between ``PreservingLayer.step`` and the dense construction, and worst asymmetry."""
    rng = rng_for(seed)
    worst = worst_asym = 0.0
    for _ in range(instances):
        n, m = (int(v) for v in rng.integers(2, 6, size=2))
        c_in = int(rng.integers(1, 4))
        cfg = LayerConfig(n=n, c_in=c_in, m=m, K=int(rng.integers(0, 4)), d_out=3,
                          rescale=bool(rng.integers(0, 2)))
        params = init_params(cfg, rng)
        for name in ("theta", "lambda1", "lambda2"):
            params[name] = rng.uniform(-1, 1, params[name].shape)
        layer = PreservingLayer(cfg)
        p = layer.bind(params)
        A1, A2 = random_symmetric(rng, n), random_symmetric(rng, n)
        S1, S2 = rng.uniform(-1, 1, (2, n, c_in))
        state = layer.init_state(p, S1, A1)
        fast, out = layer.step(p, state, S2, A2)
        ref, ref_out = dense_step(p, cfg, state, S2, A2)
        for a, b in ((fast.adj, ref.adj), (fast.signal, ref.signal), (out, ref_out)):
            worst = max(worst, float(np.max(np.abs(a - b))) / (1.0 + float(np.max(np.abs(b)))))
        worst_asym = max(worst_asym, float(np.max(np.abs(fast.adj - fast.adj.T))))
    return worst, worst_asym


def suite_preserving() -> tuple[bool, str]:
    worst, asym = step_equivalence_error()
    return worst <= STEP_TOL and asym <= 1e-9, f"step vs dense={worst:.1e}, asymmetry={asym:.1e}"


def classifier_gradient_errors(seed: int = 707, classic_kron: bool = False) -> dict[str, float]:
    """FD check of every trainable parameter of a T=3, n=5, m=3 classifier."""
    rng = rng_for(seed)
    cfg = ClassifierConfig(n=5, c_in=2, m=3, K=2, d_out=4, num_classes=3, activation="tanh",
                           classic_kron=classic_kron)
    model = ClassifierModel(cfg)
    params = model.init_params(seed)
    for name in params.trainable():
        params[name] = params[name] + 0.3 * rng.standard_normal(params[name].shape)
    frames = rng.uniform(-1, 1, (2, 3, 5, 2))
    adj = np.abs(random_symmetric(rng, 5))
    labels = np.array([0, 2])
    return gradient_errors(lambda src: ops.softmax_cross_entropy(model.logits(src, frames, adj), labels), params)


def suite_layer_gradients() -> tuple[bool, str]:
    errors = classifier_gradient_errors()
    worst = max(errors.values())
    return worst <= LAYER_GRAD_TOL, f"{len(errors)} parameters, worst relative error={worst:.1e}"


# ---- datagen and backends ----------------------------------------------------------

def suite_datagen() -> tuple[bool, str]:
    a = datagen.gen_netflix(30, 30, 3, density=0.5, seed=9)
    b = datagen.gen_netflix(30, 30, 3, density=0.5, seed=9)
    same = np.array_equal(a.M, b.M) and np.array_equal(a.train_mask, b.train_mask)
    disjoint = not np.any(a.train_mask & a.test_mask)
    frac = a.train_mask.mean()
    seqs = datagen.gen_dynseq(6, T=4, n=5, seed=3)
    seqs2 = datagen.gen_dynseq(6, T=4, n=5, seed=3)
    same_seq = all(np.array_equal(x.frames, y.frames) and x.label == y.label for x, y in zip(seqs, seqs2))
    orth = 0.0
    for seed in range(20):
        _, R = datagen.random_rotate(seqs[0].frames, seed)
        orth = max(orth, float(np.max(np.abs(R.T @ R - np.eye(3)))))
    idx = datagen.temporal_subsample(np.arange(10), 5)
    ok = same and disjoint and 0.45 <= frac <= 0.55 and same_seq and orth <= 1e-12 and list(idx) == [1, 3, 5, 7, 9]
    return ok, f"deterministic={same and same_seq}, train_fraction={frac:.3f}, orthogonality={orth:.1e}"


def suite_backends() -> tuple[bool, str]:
    """Every available kernel backend agrees with the numpy reference."""
    available = [name for name in kernels.BACKENDS if kernels.backend_available(name)]
    rng = rng_for(808)
    worst = 0.0
    for _ in range(20):
        n1, n2, c, K = 5, 4, 2, 3
        args = (rng.uniform(-1, 1, K + 1), rng.uniform(-1, 1, n2), rng.uniform(-1, 1, n1),
                random_symmetric(rng, n1)[None], random_symmetric(rng, n2)[None],
                rng.uniform(-1, 1, (2, c, n2, n1)))
        G = rng.uniform(-1, 1, (2, c, n2, n1))
        ref_out, ref_pow = kernels.load("numpy").cross_forward(*args)
        ref_back = kernels.load("numpy").cross_backward(*args[:5], ref_pow, G)
        for name in available:
            mod = kernels.load(name)
            out, powers = mod.cross_forward(*args)
            back = mod.cross_backward(*args[:5], powers, G)
            worst = max(worst, float(np.max(np.abs(out - ref_out))),
                        *(float(np.max(np.abs(x - y))) for x, y in zip(back, ref_back)))
    return worst <= 1e-12, f"backends={','.join(available)}, worst gap={worst:.1e}"


SUITES: dict[str, Suite] = {
    "numkit.algebra_and_gradients": suite_numkit,
    "spectral.filter_laws": suite_spectral,
    "crossgraph.oracle_equivalence": suite_oracle,
    "crossgraph.classic_reduction": suite_classic,
    "crossgraph.gradients": suite_cross_gradients,
    "preserving.dense_equivalence": suite_preserving,
    "preserving.layer_gradients": suite_layer_gradients,
    "datagen.determinism_and_transforms": suite_datagen,
    "kernels.backend_agreement": suite_backends,
}


def run_all(out=print) -> bool:
    """Run every suite, print a table, and report whether all passed."""
    results = []
    for name, suite in SUITES.items():
        try:
            ok, detail = suite()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        out(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    failed = [name for name, ok, _ in results if not ok]
    out(f"{len(results) - len(failed)}/{len(results)} suites passed" + (f"; failing: {', '.join(failed)}" if failed else ""))
    return not failed
