"""Graph preserving layer: learnable pooling plus recursive cross-graph filtering.

At step ``t`` the current frame graph ``(S_t, A_t)`` (``n`` nodes) is joined
with the preserved graph ``(S~, A~)`` (``m`` nodes) from the previous step::

    Sc  = conjunctive(S_t, S~)                    (n*m) x (c_in + c)
    Ac  = A_t (+)_p A~                            parameterized Kronecker sum
    S~' = W filter(Ac, Sc) W_ch                   m x c
    A~' = W Ac W^T                                m x m
    O_t = act(W_co vec(S~') + b_co)

``W`` is shared across steps, so state shapes never grow.  The first frame
is projected by a separate ``W0`` (``m x n``); its signal is zero padded
from ``c_in`` to ``c = 2 c_in`` channels.  Parameters are read from any
mapping of names to arrays or tape nodes, so the same code runs with and
without a tape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .crossgraph import conjunctive_mat, conjunctive_signal, cross_filter_mat, from_mat_channels, kron_sum_dense
from .numkit import ops
from .numkit.errors import ContractError, NumericError, ShapeError
from .numkit.tape import Params, value_of
from .spectral import poly_filter, rescale_adjacency

OUTPUT_MODES = ("last", "mean")


@dataclass(frozen=True)
class LayerConfig:
    n: int
    c_in: int
    m: int
    K: int = 2
    d_out: int = 32
    activation: str = "tanh"
    rescale: bool = True
    isolate: bool = False

    def __post_init__(self):
        for name in ("n", "c_in", "m", "d_out"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.K < 0:
            raise ContractError("K must be >= 0")
        ops.activation(self.activation)

    @property
    def c(self) -> int:
        """Preserved channel count."""
        return 2 * self.c_in

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        n, m, c_in, c = self.n, self.m, self.c_in, self.c
        if self.isolate:
            return {"theta": (self.K + 1,), "W0": (m, n), "W_co": (self.d_out, m * c_in), "b_co": (self.d_out,)}
        return {
            "theta": (self.K + 1,),
            "lambda1": (m,),
            "lambda2": (n,),
            "W0": (m, n),
            "W": (m, n * m),
            "W_ch": (c_in + c, c),
            "W_co": (self.d_out, m * c),
            "b_co": (self.d_out,),
        }


@dataclass
class PreservedState:
    adj: object
    signal: object
    step: int = 1


def init_params(config: LayerConfig, rng: np.random.Generator, params: Params | None = None,
                prefix: str = "") -> Params:
    """Identity filter, unit lambdas, uniform(+-1/sqrt(fan_in)) weights, zero bias."""
    params = params if params is not None else Params()
    for name, shape in config.param_shapes().items():
        if name == "theta":
            value = np.zeros(shape)
            value[0] = 1.0
        elif name.startswith("lambda"):
            value = np.ones(shape)
        elif name == "b_co":
            value = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            value = rng.uniform(-bound, bound, size=shape)
        params.add(prefix + name, value)
    return params


def pool_signal(W, S):
    return ops.matmul(W, S)


def pool_adjacency(W, A):
    return ops.matmul(ops.matmul(W, A), ops.transpose(W))


def _output(p: Mapping, signal, act):
    flat = ops.vec(signal)
    lead = value_of(flat).shape[:-1]
    row = ops.reshape(flat, lead + (1, value_of(flat).shape[-1]))
    pre = ops.reshape(ops.matmul(row, ops.transpose(p["W_co"])), lead + (value_of(p["W_co"]).shape[0],))
    return act(ops.add(pre, p["b_co"]))


def _finite_or_raise(step: int, *values) -> None:
    for v in values:
        if not np.all(np.isfinite(value_of(v))):
            raise NumericError(f"non-finite intermediate at recursive step {step}")


class PreservingLayer:
    """Recursive unit folding a sequence of frame graphs into a fixed-size state."""

    def __init__(self, config: LayerConfig):
        self.config = config
        self.act = ops.activation(config.activation)

    def bind(self, params, prefix: str = "") -> dict:
        """Parameter view for a forward pass: tape nodes or raw arrays."""
        from .numkit.tape import Tape

        names = self.config.param_shapes()
        if isinstance(params, Tape):
            return {n: params.param(prefix + n) for n in names}
        return {n: params[prefix + n] for n in names}

    def _check_frame(self, S, A) -> None:
        cfg = self.config
        Sv, Av = value_of(S), value_of(A)
        if Sv.shape[-2:] != (cfg.n, cfg.c_in):
            raise ShapeError(f"frame signal must end in ({cfg.n}, {cfg.c_in}), got {Sv.shape}")
        if Av.shape[-2:] != (cfg.n, cfg.n):
            raise ShapeError(f"frame adjacency must end in ({cfg.n}, {cfg.n}), got {Av.shape}")

    def init_state(self, p: Mapping, S1, A1) -> PreservedState:
        cfg = self.config
        self._check_frame(S1, A1)
        pooled = pool_signal(p["W0"], S1)
        lead = value_of(pooled).shape[:-2]
        pad = np.zeros(lead + (cfg.m, cfg.c - cfg.c_in))
        signal = ops.concat([pooled, pad], axis=-1)
        adj = pool_adjacency(p["W0"], A1)
        if cfg.rescale:
            adj = rescale_adjacency(adj)
        _finite_or_raise(1, signal, adj)
        return PreservedState(adj, signal, 1)

    def step(self, p: Mapping, state: PreservedState, S, A):
        """One recursive update; returns ``(new_state, output)``."""
        cfg = self.config
        self._check_frame(S, A)
        idx = state.step + 1
        Sc = conjunctive_mat(S, state.signal)
        H = cross_filter_mat(p["theta"], p["lambda1"], p["lambda2"], A, state.adj, Sc)
        signal = ops.matmul(pool_signal(p["W"], from_mat_channels(H)), p["W_ch"])
        adj = self._pooled_conjunctive(p, A, state.adj)
        if cfg.rescale:
            adj = rescale_adjacency(adj)
        out = _output(p, signal, self.act)
        _finite_or_raise(idx, signal, adj, out)
        return PreservedState(adj, signal, idx), out

    def _pooled_conjunctive(self, p: Mapping, A, A_prev):
        """``W Ac W^T`` via ``W (A (x) diag(l1)) W^T + W (diag(l2) (x) A~) W^T``.

        Each row of ``W`` is treated as a conjunctive signal, pushed through
        one application of ``Ac`` in matricized form, and pooled again.
        """
        cfg = self.config
        n, m = cfg.n, cfg.m
        rows = ops.permute(ops.reshape(p["W"], (m, n, m)), (0, 2, 1))
        batch = value_of(A).shape[:-2] or value_of(A_prev).shape[:-2]
        if batch:
            rows = ops.broadcast_to(rows, batch + (m, m, n))
        one_hop = np.array([0.0, 1.0])
        applied = cross_filter_mat(one_hop, p["lambda1"], p["lambda2"], A, A_prev, rows)
        return ops.matmul(p["W"], from_mat_channels(applied))

    def run_sequence(self, p: Mapping, frames, adjs, output_mode: str = "last"):
        """Fold ``T`` frames; ``frames`` is ``(B, T, n, c_in)``, ``adjs`` is
        ``(n, n)``, ``(T, n, n)`` or ``(B, T, n, n)``.  Returns ``(B, d_out)``."""
        if output_mode not in OUTPUT_MODES:
            raise ContractError(f"output_mode must be one of {OUTPUT_MODES}")
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 4:
            raise ShapeError(f"frames must be (B, T, n, c_in), got {frames.shape}")
        T = frames.shape[1]
        if T < 1:
            raise ContractError("sequence must contain at least one frame")
        adj_t = _frame_adjacencies(adjs, frames.shape, self.config.rescale)
        if self.config.isolate:
            return self._run_isolated(p, frames, adj_t)
        state = self.init_state(p, frames[:, 0], adj_t(0))
        if T == 1:
            return _output(p, state.signal, self.act)
        outputs = []
        for t in range(1, T):
            state, out = self.step(p, state, frames[:, t], adj_t(t))
            outputs.append(out)
        if output_mode == "last":
            return outputs[-1]
        acc = outputs[0]
        for out in outputs[1:]:
            acc = ops.add(acc, out)
        return ops.scale(acc, 1.0 / len(outputs))

    def _run_isolated(self, p: Mapping, frames, adj_t):
        """Per-frame filtering on each frame's own graph; outputs averaged over frames."""
        acc = None
        T = frames.shape[1]
        for t in range(T):
            filtered = poly_filter(adj_t(t), frames[:, t], p["theta"])
            out = _output(p, pool_signal(p["W0"], filtered), self.act)
            _finite_or_raise(t + 1, out)
            acc = out if acc is None else ops.add(acc, out)
        return ops.scale(acc, 1.0 / T)


def _frame_adjacencies(adjs, frame_shape, rescale: bool):
    B, T, n, _ = frame_shape
    A = np.asarray(adjs, dtype=np.float64)
    if A.shape[-2:] != (n, n):
        raise ShapeError(f"adjacency shape {A.shape} does not match {n} nodes")
    if rescale:
        A = value_of(rescale_adjacency(A))
    if A.ndim == 2:
        return lambda t: A
    if A.ndim == 3 and A.shape[0] == T:
        return lambda t: A[t]
    if A.ndim == 4 and A.shape[:2] == (B, T):
        return lambda t: A[:, t]
    raise ShapeError(f"adjacency shape {A.shape} inconsistent with {B} sequences of {T} frames")


def dense_step(p: Mapping, config: LayerConfig, state: PreservedState, S, A):
    """Reference step for one unbatched sample using the explicit ``(n*m)^2`` adjacency."""
    p = {k: np.asarray(value_of(v)) for k, v in p.items()}
    sig_prev = np.asarray(value_of(state.signal))
    adj_prev = np.asarray(value_of(state.adj))
    Ac = kron_sum_dense(A, adj_prev, p["lambda1"], p["lambda2"])
    Sc = conjunctive_signal(S, sig_prev).value
    H = poly_filter(Ac, Sc, p["theta"])
    signal = p["W"] @ H @ p["W_ch"]
    adj = p["W"] @ Ac @ p["W"].T
    if config.rescale:
        adj = value_of(rescale_adjacency(adj))
    pre = p["W_co"] @ signal.reshape(-1, order="F") + p["b_co"]
    out = value_of(ops.activation(config.activation)(pre))
    return PreservedState(adj, signal, state.step + 1), out
