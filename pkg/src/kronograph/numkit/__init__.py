"""Dense float64 matrix primitives with a reverse-mode tape."""
from .checkpoint import load_checkpoint, restore_params, save_checkpoint
from .errors import ContractError, DomainError, KronographError, NumericError, ShapeError
from .ops import (
    activation,
    add,
    broadcast_to,
    concat,
    diag_scale_left,
    diag_scale_right,
    hadamard,
    kron,
    mat,
    matmul,
    mean,
    permute,
    relu,
    reshape,
    scale,
    softmax,
    softmax_cross_entropy,
    sub,
    tanh,
    total,
    transpose,
    vec,
    weighted_sum,
)
from .tape import Node, Params, Tape, record, tape_of, unbroadcast, value_of


def check_finite(x, what: str) -> None:
    import numpy as np

    if not np.all(np.isfinite(value_of(x))):
        raise NumericError(f"non-finite values in {what}")


def backward(tape: Tape, loss: Node):
    """Gradients of a scalar ``loss`` for every parameter on ``tape``."""
    return tape.backward(loss)
