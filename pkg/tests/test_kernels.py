import os
import subprocess
import sys

import numpy as np
import pytest

from kronograph import kernels
from kronograph.crossgraph import ParamKronFilter, cross_filter
from kronograph.verify import suite_backends

from conftest import sym

needs_numba = pytest.mark.skipif(not kernels.backend_available("numba"), reason="numba not installed")


@pytest.fixture
def restore_backend():
    before = kernels.get_backend()
    yield
    kernels.set_backend(before)


def test_default_backend_is_numpy():
    env = {k: v for k, v in os.environ.items() if k != "KRONOGRAPH_BACKEND"}
    out = subprocess.run([sys.executable, "-c", "from kronograph import kernels; print(kernels.get_backend())"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"


@needs_numba
def test_env_var_selects_backend():
    env = dict(os.environ, KRONOGRAPH_BACKEND="numba")
    out = subprocess.run([sys.executable, "-c", "from kronograph import kernels; print(kernels.get_backend())"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numba"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")


@needs_numba
def test_backends_agree(rng, restore_backend):
    filt = ParamKronFilter(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 6))
    Ax, Ay = sym(rng, 6), sym(rng, 5)
    S = rng.uniform(-1, 1, (30, 3))
    kernels.set_backend("numpy")
    ref = cross_filter(filt, Ax, Ay, S)
    kernels.set_backend("numba")
    assert kernels.get_backend() == "numba"
    assert np.max(np.abs(cross_filter(filt, Ax, Ay, S) - ref)) <= 1e-12


def test_backend_suite_passes():
    ok, detail = suite_backends()
    assert ok, detail
