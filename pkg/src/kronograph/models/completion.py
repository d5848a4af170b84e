"""Matrix completion over a row graph and a column graph.

The ``m x n`` matrix is a signal on the conjunctive graph of the column
graph (``n1 = n``) and the row graph (``n2 = m``); its matricized form is
the matrix itself.  Each layer applies a cross-graph polynomial filter to
every channel, mixes channels with a ``1 x 1`` projection and an
activation.  A final projection maps to one channel and, optionally, the
masked input is added back.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..crossgraph import cross_filter_mat
from ..numkit import ops
from ..numkit.errors import ContractError, ShapeError
from ..numkit.tape import Params, Tape, value_of
from ..spectral import Graph, spectral_rescale


@dataclass(frozen=True)
class CompletionConfig:
    K: int = 2
    widths: tuple[int, ...] = (8, 8)
    activation: str = "tanh"
    residual: bool = True
    mask_channel: bool = True
    rescale: bool = True
    classic_kron: bool = False

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or min(self.widths) < 1:
            raise ContractError("widths must be a non-empty list of positive integers")
        if self.K < 0:
            raise ContractError("K must be >= 0")
        ops.activation(self.activation)

    @property
    def in_channels(self) -> int:
        return 2 if self.mask_channel else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


class CompletionModel:
    def __init__(self, config: CompletionConfig, row_graph: Graph, col_graph: Graph):
        self.config = config
        if config.rescale:
            row_graph, col_graph = spectral_rescale(row_graph), spectral_rescale(col_graph)
        self.row_graph = row_graph
        self.col_graph = col_graph
        self.act = ops.activation(config.activation)

    @property
    def shape(self) -> tuple[int, int]:
        return self.row_graph.n, self.col_graph.n

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        m, n = self.shape
        shapes: dict[str, tuple[int, ...]] = {}
        prev = self.config.in_channels
        for l, width in enumerate(self.config.widths):
            shapes[f"L{l}.theta"] = (self.config.K + 1,)
            shapes[f"L{l}.lambda1"] = (m,)
            shapes[f"L{l}.lambda2"] = (n,)
            shapes[f"L{l}.W"] = (prev, width)
            shapes[f"L{l}.b"] = (width,)
            prev = width
        shapes["proj.W"] = (prev, 1)
        shapes["proj.b"] = (1,)
        return shapes

    def init_params(self, seed: int) -> Params:
        rng = np.random.Generator(np.random.Philox(seed))
        params = Params()
        for name, shape in self.param_shapes().items():
            kind = name.split(".")[1]
            if kind == "theta":
                value = np.zeros(shape)
                value[0] = 1.0
            elif kind.startswith("lambda"):
                value = np.ones(shape)
            elif kind == "b":
                value = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                value = rng.uniform(-bound, bound, size=shape)
            frozen = self.config.classic_kron and kind.startswith("lambda")
            params.add(name, value, frozen=frozen)
        return params

    def forward(self, source: Tape | Params, X_in, mask):
        m, n = self.shape
        X_in = np.asarray(X_in, dtype=np.float64)
        mask = np.asarray(mask, dtype=np.float64)
        if X_in.shape != (m, n) or mask.shape != (m, n):
            raise ShapeError(f"input and mask must be {m}x{n}, got {X_in.shape} and {mask.shape}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ContractError("mask entries must be 0 or 1")
        get = source.param if isinstance(source, Tape) else source.__getitem__
        observed = X_in * mask
        channels = [observed, mask] if self.config.mask_channel else [observed]
        h = np.stack(channels)
        Ax, Ay = self.col_graph.adj, self.row_graph.adj
        for l, width in enumerate(self.config.widths):
            filt = cross_filter_mat(get(f"L{l}.theta"), get(f"L{l}.lambda1"), get(f"L{l}.lambda2"), Ax, Ay, h)
            c = value_of(filt).shape[0]
            mixed = ops.matmul(ops.transpose(get(f"L{l}.W")), ops.reshape(filt, (c, m * n)))
            mixed = ops.add(mixed, ops.reshape(get(f"L{l}.b"), (width, 1)))
            h = ops.reshape(self.act(mixed), (width, m, n))
        c = value_of(h).shape[0]
        out = ops.matmul(ops.transpose(get("proj.W")), ops.reshape(h, (c, m * n)))
        out = ops.reshape(ops.add(out, ops.reshape(get("proj.b"), (1, 1))), (m, n))
        if self.config.residual:
            out = ops.add(out, observed)
        return out

    def weight_nodes(self, tape: Tape) -> list:
        """Weight matrices entering the decay term."""
        return [tape.param(n) for n in self.param_shapes() if n.endswith(".W")]


def complete_forward(model: CompletionModel, params: Params, X_in, mask) -> np.ndarray:
    return value_of(model.forward(params, X_in, mask))
