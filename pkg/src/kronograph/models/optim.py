"""Adam with bias correction."""
from __future__ import annotations

import numpy as np

from ..numkit.errors import NumericError
from ..numkit.tape import Params


class Adam:
    """Owns first/second moment buffers for every trainable parameter."""

    def __init__(self, params: Params, lr: float = 1e-2, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(params[n]) for n in params.trainable()}
        self.v = {n: np.zeros_like(params[n]) for n in params.trainable()}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        grads = grads if grads is not None else self.params.grads
        for name in self.m:
            if not np.all(np.isfinite(grads[name])):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in self.m:
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            self.params.values[name] = self.params.values[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(opt: Adam, params: Params, grads: dict[str, np.ndarray]) -> Params:
    """Functional spelling of ``opt.step``; updates ``params`` in place and returns it."""
    if opt.params is not params:
        raise ValueError("optimizer is bound to a different parameter set")
    opt.step(grads)
    return params
