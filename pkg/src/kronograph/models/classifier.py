"""Sequence classifier: preserving layer, fully connected head, softmax."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..numkit import ops
from ..numkit.errors import ContractError
from ..numkit.tape import Params, Tape, value_of
from ..preserving import OUTPUT_MODES, LayerConfig, PreservingLayer, init_params

PREFIX = "gp."


@dataclass(frozen=True)
class ClassifierConfig:
    n: int
    c_in: int = 3
    m: int = 8
    K: int = 2
    d_out: int = 32
    num_classes: int = 2
    activation: str = "tanh"
    output_mode: str = "last"
    rescale: bool = True
    isolate_mode: bool = False
    classic_kron: bool = False

    def __post_init__(self):
        if self.num_classes < 2:
            raise ContractError("num_classes must be >= 2")
        if self.output_mode not in OUTPUT_MODES:
            raise ContractError(f"output_mode must be one of {OUTPUT_MODES}")

    def layer(self) -> LayerConfig:
        return LayerConfig(n=self.n, c_in=self.c_in, m=self.m, K=self.K, d_out=self.d_out,
                           activation=self.activation, rescale=self.rescale, isolate=self.isolate_mode)

    def to_dict(self) -> dict:
        return asdict(self)


class ClassifierModel:
    def __init__(self, config: ClassifierConfig):
        self.config = config
        self.layer = PreservingLayer(config.layer())

    def init_params(self, seed: int) -> Params:
        rng = np.random.Generator(np.random.Philox(seed))
        params = init_params(self.layer.config, rng, prefix=PREFIX)
        C, d = self.config.num_classes, self.config.d_out
        bound = 1.0 / np.sqrt(d)
        params.add("fc.W", rng.uniform(-bound, bound, size=(C, d)))
        params.add("fc.b", np.zeros(C))
        if self.config.classic_kron and not self.config.isolate_mode:
            params.freeze(PREFIX + "lambda1")
            params.freeze(PREFIX + "lambda2")
        return params

    def logits(self, source: Tape | Params, frames, adjs):
        p = self.layer.bind(source, PREFIX)
        feats = self.layer.run_sequence(p, frames, adjs, self.config.output_mode)
        if isinstance(source, Tape):
            W, b = source.param("fc.W"), source.param("fc.b")
        else:
            W, b = source["fc.W"], source["fc.b"]
        return ops.add(ops.matmul(feats, ops.transpose(W)), b)

    def loss(self, tape: Tape, frames, adjs, labels):
        return ops.softmax_cross_entropy(self.logits(tape, frames, adjs), labels)

    def predict_proba(self, params: Params, frames, adjs) -> np.ndarray:
        return value_of(ops.softmax(self.logits(params, frames, adjs)))

    def predict(self, params: Params, frames, adjs) -> np.ndarray:
        return np.argmax(self.predict_proba(params, frames, adjs), axis=1)


def classify_forward(model: ClassifierModel, params: Params, frames, adjs) -> np.ndarray:
    """Class probabilities for one sequence ``(T, n, c_in)`` or a batch ``(B, T, n, c_in)``."""
    frames = np.asarray(frames, dtype=np.float64)
    single = frames.ndim == 3
    probs = model.predict_proba(params, frames[None] if single else frames, adjs)
    return probs[0] if single else probs
