"""Backend dispatch for the factorized cross-graph filter kernels.

``KRONOGRAPH_BACKEND=numba`` selects the compiled loop kernels,
``KRONOGRAPH_BACKEND=numpy`` (the default) the vectorised numpy path.
Both honour the same shapes and return the same values up to rounding.
"""
from __future__ import annotations

import os
import warnings

from . import _numpy
from ._jit import NUMBA_OK

BACKENDS = ("numpy", "numba")
_active = None


def backend_available(name: str) -> bool:
    return name == "numpy" or (name == "numba" and NUMBA_OK)


def load(name: str):
    """Kernel module for ``name`` (falls back to numpy when numba is missing)."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        if not NUMBA_OK:
            warnings.warn("numba is not installed; using the numpy kernels", RuntimeWarning)
            return _numpy
        from . import _numba
        return _numba
    raise ValueError(f"unknown kernel backend {name!r}; expected one of {BACKENDS}")


def set_backend(name: str) -> None:
    global _active
    _active = (name, load(name))


def get_backend() -> str:
    if _active is None:
        set_backend(os.environ.get("KRONOGRAPH_BACKEND", "numpy").strip().lower() or "numpy")
    return _active[0]


def module():
    get_backend()
    return _active[1]


def cross_forward(theta, lam1, lam2, Ax, Ay, S):
    return module().cross_forward(theta, lam1, lam2, Ax, Ay, S)


def cross_backward(theta, lam1, lam2, Ax, Ay, powers, G):
    return module().cross_backward(theta, lam1, lam2, Ax, Ay, powers, G)
