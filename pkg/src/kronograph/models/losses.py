"""Training objectives."""
from __future__ import annotations

import numpy as np

from ..numkit import ops
from ..numkit.errors import ContractError, ShapeError
from ..numkit.tape import value_of


def cross_entropy_loss(probs, labels) -> float:
    """Mean negative log-probability of the true class."""
    P = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if P.ndim != 2 or y.shape != (P.shape[0],):
        raise ShapeError(f"probabilities {P.shape} do not match labels {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= P.shape[1]):
        raise ContractError(f"labels must lie in [0, {P.shape[1]})")
    picked = P[np.arange(P.shape[0]), y]
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.log(picked)))


def completion_loss(X_hat, M, train_mask, params=None, weight_decay: float = 0.0):
    """Masked mean squared error plus ``weight_decay * sum ||p||^2``.

    ``params`` is an iterable of arrays or tape nodes entering the decay term.
    """
    mask = np.asarray(train_mask, dtype=np.float64)
    count = mask.sum()
    if count == 0:
        raise ContractError("completion loss needs a non-empty training mask")
    if value_of(X_hat).shape != mask.shape or np.shape(M) != mask.shape:
        raise ShapeError("prediction, target and mask shapes differ")
    resid = ops.hadamard(ops.sub(X_hat, np.asarray(M, dtype=np.float64)), mask)
    loss = ops.scale(ops.total(ops.hadamard(resid, resid)), 1.0 / count)
    if weight_decay and params is not None:
        for p in params:
            loss = ops.add(loss, ops.scale(ops.total(ops.hadamard(p, p)), weight_decay))
    return loss
