import numpy as np
import pytest

from kronograph.numkit import ContractError, NumericError, ShapeError, value_of
from kronograph.preserving import (LayerConfig, PreservedState, PreservingLayer, dense_step, init_params,
                                   pool_adjacency, pool_signal)
from kronograph.spectral import poly_filter
from kronograph.verify import step_equivalence_error

from conftest import sym


def _layer(rng, n=4, c_in=2, m=3, K=2, d_out=5, randomize=True, **kw):
    cfg = LayerConfig(n=n, c_in=c_in, m=m, K=K, d_out=d_out, **kw)
    params = init_params(cfg, rng)
    if randomize and not cfg.isolate:
        for name in ("theta", "lambda1", "lambda2"):
            params[name] = rng.uniform(-1, 1, params[name].shape)
    layer = PreservingLayer(cfg)
    return layer, layer.bind(params), params


def test_pool_examples(rng):
    W = np.zeros((2, 4))
    W[0, 1] = W[1, 3] = 1.0
    S = rng.uniform(size=(4, 3))
    assert np.array_equal(pool_signal(W, S), S[[1, 3]])
    A = sym(rng, 4)
    assert np.array_equal(pool_adjacency(W, A), A[np.ix_([1, 3], [1, 3])])
    assert np.array_equal(pool_adjacency(np.eye(4), A), A)
    P = pool_adjacency(rng.uniform(size=(3, 4)), A)
    assert np.max(np.abs(P - P.T)) <= 1e-15


def test_layer_config_validation():
    with pytest.raises(ContractError):
        LayerConfig(n=0, c_in=1, m=2)
    with pytest.raises(ContractError):
        LayerConfig(n=2, c_in=1, m=2, K=-1)
    with pytest.raises(ContractError):
        LayerConfig(n=2, c_in=1, m=2, activation="sigmoid")
    assert LayerConfig(n=2, c_in=3, m=2).c == 6


def test_init_state_examples(rng):
    layer, p, _ = _layer(rng, rescale=False)
    S1, A1 = rng.uniform(size=(4, 2)), sym(rng, 4)
    st = layer.init_state(p, S1, A1)
    assert st.step == 1
    assert np.allclose(st.signal[:, :2], p["W0"] @ S1, rtol=0, atol=1e-15)
    assert np.array_equal(st.signal[:, 2:], np.zeros((3, 2)))
    assert np.allclose(st.adj, p["W0"] @ A1 @ p["W0"].T, rtol=0, atol=1e-15)


def test_init_state_rescaled_norm(rng):
    layer, p, _ = _layer(rng)
    st = layer.init_state(p, rng.uniform(size=(4, 2)), 10 * sym(rng, 4))
    assert np.max(np.abs(np.linalg.eigvalsh(st.adj))) <= 1 + 1e-6


def test_step_shapes(rng):
    layer, p, _ = _layer(rng, n=5, c_in=3, m=3)
    st = layer.init_state(p, rng.uniform(size=(5, 3)), sym(rng, 5))
    new, out = layer.step(p, st, rng.uniform(size=(5, 3)), sym(rng, 5))
    assert new.signal.shape == (3, 6) and new.adj.shape == (3, 3) and out.shape == (5,)
    assert new.step == 2
    assert p["W_ch"].shape == (9, 6)  # Sc has 15 rows and c_in + c = 9 channels


def test_step_matches_dense_construction():
    worst, asym = step_equivalence_error(instances=30)
    assert worst <= 1e-10
    assert asym <= 1e-12


def test_zero_output_weights_give_activated_bias(rng):
    layer, p, params = _layer(rng, activation="tanh")
    params["W_co"] = np.zeros_like(params["W_co"])
    params["b_co"] = rng.uniform(-1, 1, params["b_co"].shape)
    p = layer.bind(params)
    st = layer.init_state(p, rng.uniform(size=(4, 2)), sym(rng, 4))
    _, out = layer.step(p, st, rng.uniform(size=(4, 2)), sym(rng, 4))
    assert np.allclose(out, np.tanh(params["b_co"]), rtol=0, atol=1e-15)


def test_run_sequence_unrolls(rng):
    layer, p, _ = _layer(rng)
    frames = rng.uniform(-1, 1, (2, 3, 4, 2))
    A = sym(rng, 4)
    got = value_of(layer.run_sequence(p, frames, A))
    # the shared frame graph is rescaled once before folding
    A_r = A / max(1.0, np.max(np.abs(np.linalg.eigvalsh(A))))
    for b in range(2):
        st = layer.init_state(p, frames[b, 0], A_r)
        for t in (1, 2):
            st, out = layer.step(p, st, frames[b, t], A_r)
        assert np.allclose(got[b], out, rtol=0, atol=1e-9)


def test_run_sequence_single_frame(rng):
    layer, p, _ = _layer(rng, rescale=False)
    frames = rng.uniform(-1, 1, (1, 1, 4, 2))
    A = sym(rng, 4)
    st = layer.init_state(p, frames[0, 0], A)
    expected = np.tanh(p["W_co"] @ st.signal.reshape(-1, order="F") + p["b_co"])
    assert np.allclose(value_of(layer.run_sequence(p, frames, A))[0], expected, rtol=0, atol=1e-14)


def test_run_sequence_mean_mode(rng):
    layer, p, _ = _layer(rng, rescale=False)
    frames = rng.uniform(-1, 1, (1, 3, 4, 2))
    A = sym(rng, 4)
    st = layer.init_state(p, frames[0, 0], A)
    outs = []
    for t in (1, 2):
        st, out = layer.step(p, st, frames[0, t], A)
        outs.append(out)
    got = value_of(layer.run_sequence(p, frames, A, output_mode="mean"))[0]
    assert np.allclose(got, np.mean(outs, axis=0), rtol=0, atol=1e-14)


def test_frame_order_matters(rng):
    layer, p, _ = _layer(rng)
    frames = rng.uniform(-1, 1, (1, 4, 4, 2))
    A = sym(rng, 4)
    fwd = value_of(layer.run_sequence(p, frames, A))
    rev = value_of(layer.run_sequence(p, frames[:, ::-1], A))
    assert np.max(np.abs(fwd - rev)) > 1e-6


def test_run_sequence_errors(rng):
    layer, p, _ = _layer(rng)
    A = sym(rng, 4)
    with pytest.raises(ShapeError):
        layer.run_sequence(p, rng.uniform(size=(3, 4, 2)), A)
    with pytest.raises(ShapeError):
        layer.run_sequence(p, rng.uniform(size=(1, 2, 5, 2)), A)
    with pytest.raises(ShapeError):
        layer.run_sequence(p, rng.uniform(size=(1, 2, 4, 2)), sym(rng, 3))
    with pytest.raises(ContractError):
        layer.run_sequence(p, np.zeros((1, 0, 4, 2)), A)
    with pytest.raises(ContractError):
        layer.run_sequence(p, rng.uniform(size=(1, 2, 4, 2)), A, output_mode="max")


def test_per_frame_adjacencies(rng):
    layer, p, _ = _layer(rng, rescale=False)
    frames = rng.uniform(-1, 1, (2, 3, 4, 2))
    A = np.stack([sym(rng, 4) for _ in range(3)])
    shared = value_of(layer.run_sequence(p, frames, A))
    batched = value_of(layer.run_sequence(p, frames, np.broadcast_to(A, (2, 3, 4, 4))))
    assert np.allclose(shared, batched, rtol=0, atol=1e-14)


def test_selection_pooling_reduces_to_per_frame_filter(rng):
    """With lambda2 = 0 the preserved graph is invisible and a selection W reads off the frame filter."""
    n = m = 4
    c_in = 2
    cfg = LayerConfig(n=n, c_in=c_in, m=m, K=3, d_out=2, rescale=False)
    params = init_params(cfg, rng)
    params["theta"] = rng.uniform(-1, 1, 4)
    params["lambda1"] = np.ones(m)
    params["lambda2"] = np.zeros(n)
    W = np.zeros((m, n * m))
    for i in range(n):
        W[i, i * m] = 1.0
    params["W"] = W
    W_ch = np.zeros((c_in + 2 * c_in, 2 * c_in))
    W_ch[:c_in, :c_in] = np.eye(c_in)
    params["W_ch"] = W_ch
    layer = PreservingLayer(cfg)
    p = layer.bind(params)
    A1, A2 = sym(rng, n), sym(rng, n)
    S1, S2 = rng.uniform(-1, 1, (2, n, c_in))
    st, _ = layer.step(p, layer.init_state(p, S1, A1), S2, A2)
    assert np.allclose(st.signal[:, :c_in], poly_filter(A2, S2, params["theta"]), rtol=0, atol=1e-13)


def test_non_finite_step_is_named(rng):
    layer, p, _ = _layer(rng)
    frames = rng.uniform(-1, 1, (1, 4, 4, 2))
    frames[0, 2, 1, 0] = np.inf
    with np.errstate(all="ignore"), pytest.raises(NumericError, match="step 3"):
        layer.run_sequence(p, frames, sym(rng, 4))


def test_dense_step_matches_batched_step(rng):
    layer, p, _ = _layer(rng)
    S1, A1 = rng.uniform(size=(4, 2)), sym(rng, 4)
    S2, A2 = rng.uniform(size=(4, 2)), sym(rng, 4)
    st = layer.init_state(p, S1, A1)
    batched = PreservedState(st.adj[None], st.signal[None])
    fast, out = layer.step(p, batched, S2[None], A2[None])
    ref, ref_out = dense_step(p, layer.config, st, S2, A2)
    assert np.allclose(fast.signal[0], ref.signal, rtol=0, atol=1e-12)
    assert np.allclose(out[0], ref_out, rtol=0, atol=1e-12)
