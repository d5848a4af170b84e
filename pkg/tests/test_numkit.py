import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kronograph.numkit import (ContractError, Params, ShapeError, Tape, backward, load_checkpoint, ops,
                               restore_params, save_checkpoint)
from kronograph.verify import gradient_errors


def _get(src, name):
    return src.param(name) if isinstance(src, Tape) else src[name]


# ---- matmul ----------------------------------------------------------------

def test_matmul_identity(rng):
    B = rng.uniform(-1, 1, (2, 3))
    assert np.array_equal(ops.matmul(np.eye(2), B), B)


def test_matmul_hand_example():
    out = ops.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0], [6.0]]))
    assert np.array_equal(out, [[17.0], [39.0]])


def test_matmul_annihilator(rng):
    assert np.array_equal(ops.matmul(rng.uniform(size=(3, 4)), np.zeros((4, 2))), np.zeros((3, 2)))


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        ops.matmul(np.ones(3), np.ones((3, 1)))


# ---- vec / mat ----------------------------------------------------------------

def test_vec_stacks_columns():
    X = np.array([[1.0, 3.0], [2.0, 4.0]])  # columns [1, 2] and [3, 4]
    assert np.array_equal(ops.vec(X), [1.0, 2.0, 3.0, 4.0])


def test_mat_inverts_vec(rng):
    X = rng.uniform(size=(3, 5))
    assert np.array_equal(ops.mat(ops.vec(X), 3, 5), X)


def test_matricization_identity_2x2(rng):
    A, X, B = rng.uniform(-1, 1, (3, 2, 2))
    assert np.allclose(np.kron(B.T, A) @ ops.vec(X), ops.vec(A @ X @ B), rtol=0, atol=1e-14)


def test_mat_length_error():
    with pytest.raises(ShapeError):
        ops.mat(np.ones(5), 2, 3)
    with pytest.raises(ShapeError):
        ops.vec(np.ones(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31))
def test_vec_mat_roundtrip_exact(p, q, seed):
    X = np.random.Generator(np.random.Philox(seed)).standard_normal((p, q))
    assert np.array_equal(ops.mat(ops.vec(X), p, q), X)
    assert np.array_equal(ops.vec(ops.mat(ops.vec(X), p, q)), ops.vec(X))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**31))
def test_matricization_identity_property(p, q, r, seed):
    g = np.random.Generator(np.random.Philox(seed))
    A, X, B = g.uniform(-1, 1, (p, p)), g.uniform(-1, 1, (p, q)), g.uniform(-1, 1, (q, r))
    lhs = ops.kron(B.T, A) @ ops.vec(X)
    rhs = ops.vec(A @ X @ B)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


# ---- kron -----------------------------------------------------------------------

def test_kron_identity_expansion(rng):
    B = rng.uniform(size=(2, 3))
    expected = np.zeros((4, 6))
    expected[:2, :3] = B
    expected[2:, 3:] = B
    assert np.array_equal(ops.kron(np.eye(2), B), expected)


def test_kron_scalar_block():
    assert np.array_equal(ops.kron(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[2.0]])), [[0, 2], [2, 0]])


def test_kron_vector_pattern():
    assert np.array_equal(ops.kron(np.array([1.0, 2.0]), np.ones(3)), [1, 1, 1, 2, 2, 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
def test_kron_matches_numpy_and_dimension_law(p1, q1, p2, q2, seed):
    g = np.random.Generator(np.random.Philox(seed))
    A, B = g.standard_normal((p1, q1)), g.standard_normal((p2, q2))
    K = ops.kron(A, B)
    assert K.shape == (p1 * p2, q1 * q2)
    assert np.array_equal(K, np.kron(A, B))


def test_kron_of_identities():
    assert np.array_equal(ops.kron(np.eye(3), np.eye(2)), np.eye(6))


# ---- diagonal scaling ----------------------------------------------------------------

def test_diag_scale_ones_is_identity(rng):
    X = rng.uniform(size=(3, 4))
    assert np.array_equal(ops.diag_scale_left(np.ones(3), X), X)
    assert np.array_equal(ops.diag_scale_right(X, np.ones(4)), X)


def test_diag_scale_left_example():
    assert np.array_equal(ops.diag_scale_left(np.array([2.0, 3.0]), np.ones((2, 2))), [[2, 2], [3, 3]])


def test_diag_scale_matches_explicit_diagonal(rng):
    X = rng.uniform(-1, 1, (4, 3))
    l, r = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 3)
    assert np.allclose(ops.diag_scale_left(l, X), np.diag(l) @ X, rtol=0, atol=1e-15)
    assert np.allclose(ops.diag_scale_right(X, r), X @ np.diag(r), rtol=0, atol=1e-15)


def test_diag_scale_shape_error():
    with pytest.raises(ShapeError):
        ops.diag_scale_left(np.ones(2), np.ones((3, 3)))
    with pytest.raises(ShapeError):
        ops.diag_scale_right(np.ones((3, 3)), np.ones(2))


# ---- elementwise ----------------------------------------------------------------------

def test_elementwise_examples(rng):
    assert ops.tanh(np.zeros((1, 1)))[0, 0] == 0.0
    assert np.array_equal(ops.relu(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])
    X = rng.uniform(size=(2, 3))
    assert np.array_equal(ops.add(X, np.zeros_like(X)), X)
    assert np.array_equal(ops.scale(X, 2.0), 2 * X)


def test_binary_shape_errors():
    for fn in (ops.add, ops.sub, ops.hadamard):
        with pytest.raises(ShapeError):
            fn(np.ones((2, 3)), np.ones((3, 2)))


def test_relu_gradient_at_zero_is_zero():
    params = Params({"x": np.array([[0.0, 1.0, -1.0]])})
    tape = Tape(params)
    tape.backward(ops.total(ops.relu(tape.param("x"))))
    assert np.array_equal(params.grads["x"], [[0.0, 1.0, 0.0]])


def test_unknown_activation():
    with pytest.raises(ContractError):
        ops.activation("gelu")


# ---- backward ----------------------------------------------------------------------------

def test_backward_quadratic(rng):
    X = rng.uniform(-1, 1, (3, 2))
    params = Params({"X": X})
    tape = Tape(params)
    x = tape.param("X")
    grads = backward(tape, ops.total(ops.hadamard(x, x)))
    assert np.allclose(grads["X"], 2 * X, rtol=0, atol=1e-15)


def test_backward_matmul_adjoint(rng):
    A, B = rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (3, 4))
    params = Params({"A": A, "B": B})
    tape = Tape(params)
    grads = tape.backward(ops.total(ops.matmul(tape.param("A"), tape.param("B"))))
    assert np.allclose(grads["A"], np.ones((2, 4)) @ B.T, rtol=0, atol=1e-15)


def test_backward_rejects_non_scalar(rng):
    params = Params({"A": rng.uniform(size=(2, 2))})
    tape = Tape(params)
    with pytest.raises(ContractError):
        tape.backward(ops.scale(tape.param("A"), 2.0))
    with pytest.raises(ContractError):
        tape.backward(np.float64(1.0))


def test_unreached_and_frozen_params_get_zero_grad(rng):
    params = Params({"a": rng.uniform(size=(2, 2)), "b": rng.uniform(size=(2, 2)), "c": rng.uniform(size=(2, 2))})
    params.freeze("c")
    tape = Tape(params)
    loss = ops.total(ops.hadamard(tape.param("a"), tape.param("c")))
    grads = tape.backward(loss)
    assert np.array_equal(grads["b"], np.zeros((2, 2)))
    assert np.array_equal(grads["c"], np.zeros((2, 2)))
    assert np.allclose(grads["a"], params["c"])


UNARY = {
    "tanh": ops.tanh, "relu": ops.relu, "vec": ops.vec, "transpose": ops.transpose, "softmax": ops.softmax,
    "scale": lambda x: ops.scale(x, 0.7), "mat": lambda x: ops.mat(ops.vec(x), 2, 6),
    "reshape": lambda x: ops.reshape(x, (4, 3)), "permute": lambda x: ops.permute(x, (1, 0)),
    "concat": lambda x: ops.concat([x, ops.scale(x, 2.0)], axis=0),
}
BINARY = {
    "matmul": (ops.matmul, (3, 4), (4, 2)), "add": (ops.add, (3, 4), (3, 4)), "sub": (ops.sub, (3, 4), (1, 4)),
    "hadamard": (ops.hadamard, (3, 4), (3, 4)), "diag_left": (ops.diag_scale_left, (3,), (3, 4)),
    "diag_right": (ops.diag_scale_right, (3, 4), (4,)), "weighted_sum": (lambda w, x: ops.weighted_sum(w, [x, ops.tanh(x)]), (2,), (3, 4)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients_match_central_differences(name, rng):
    X = rng.uniform(-1, 1, (3, 4))
    X[np.abs(X) < 1e-3] = 0.5
    fn = UNARY[name]
    W = rng.uniform(-1, 1, np.shape(fn(X)))
    errs = gradient_errors(lambda s: ops.total(ops.hadamard(fn(_get(s, "x")), W)), Params({"x": X}))
    assert max(errs.values()) < 1e-5


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients_match_central_differences(name, rng):
    fn, sa, sb = BINARY[name]
    params = Params({"a": rng.uniform(-1, 1, sa), "b": rng.uniform(-1, 1, sb)})
    W = rng.uniform(-1, 1, np.shape(fn(params["a"], params["b"])))
    errs = gradient_errors(lambda s: ops.total(ops.hadamard(fn(_get(s, "a"), _get(s, "b")), W)), params)
    assert max(errs.values()) < 1e-5


def test_softmax_cross_entropy_gradient_is_softmax_minus_onehot(rng):
    Z = rng.uniform(-1, 1, (3, 4))
    y = np.array([0, 3, 1])
    tape = Tape()
    z = tape.watch(Z)
    tape.backward(ops.softmax_cross_entropy(z, y))
    P = np.exp(Z) / np.exp(Z).sum(axis=1, keepdims=True)
    assert np.allclose(z.grad, (P - np.eye(4)[y]) / 3, rtol=0, atol=1e-15)


def test_forward_replay_is_bit_identical(rng):
    A, B = rng.uniform(-1, 1, (2, 5, 5))

    def run():
        tape = Tape(Params({"A": A}))
        return ops.tanh(ops.matmul(tape.param("A"), ops.diag_scale_left(np.arange(5.0), B))).value

    assert run().tobytes() == run().tobytes()


# ---- checkpoints -----------------------------------------------------------------------------

@pytest.mark.parametrize("suffix", [".bin", ".json"])
def test_checkpoint_roundtrip(tmp_path, rng, suffix):
    params = Params({"W": rng.standard_normal((3, 4)), "b": rng.standard_normal(4), "s": rng.standard_normal((1, 1))})
    path = save_checkpoint(tmp_path / f"ck{suffix}", params, {"note": "x"})
    stored, meta = load_checkpoint(path)
    assert meta == {"note": "x"}
    fresh = Params({k: np.zeros_like(v) for k, v in params.values.items()})
    restore_params(fresh, stored)
    for k in params:
        assert fresh[k].tobytes() == params[k].tobytes()


def test_checkpoint_binary_layout(tmp_path):
    path = save_checkpoint(tmp_path / "ck.bin", {"M": np.array([[1.0, 3.0], [2.0, 4.0]])})
    raw = path.read_bytes()
    assert raw.startswith(b"KGCKPT1\n")
    hlen = int.from_bytes(raw[8:16], "little")
    header = json.loads(raw[16:16 + hlen])
    assert header["params"] == [{"name": "M", "rows": 2, "cols": 2}]
    assert np.array_equal(np.frombuffer(raw[16 + hlen:], "<f8"), [1.0, 2.0, 3.0, 4.0])


def test_checkpoint_errors(tmp_path, rng):
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "missing.bin")
    (tmp_path / "junk.bin").write_bytes(b"not a checkpoint")
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "junk.bin")
    path = save_checkpoint(tmp_path / "ck.bin", {"W": np.ones((2, 3))})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ContractError):
        load_checkpoint(path)
    stored, _ = load_checkpoint(save_checkpoint(tmp_path / "ok.bin", {"W": np.ones((2, 3))}))
    with pytest.raises(ShapeError, match="shape mismatch"):
        restore_params(Params({"W": np.zeros((3, 2))}), stored)
    with pytest.raises(ShapeError, match="mismatch"):
        restore_params(Params({"V": np.zeros((2, 3))}), stored)


def test_params_shape_guard():
    params = Params({"W": np.zeros((2, 2))})
    with pytest.raises(ShapeError):
        params["W"] = np.zeros(3)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_checkpoint_roundtrip_property(tmp_path_factory, X):
    path = tmp_path_factory.mktemp("ck") / "p.bin"
    save_checkpoint(path, {"X": X})
    stored, _ = load_checkpoint(path)
    assert stored["X"].tobytes() == np.asarray(X, order="C").tobytes()
