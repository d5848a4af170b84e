import numpy as np
import pytest
from sklearn.metrics import accuracy_score, precision_score, recall_score

from kronograph import datagen
from kronograph.config import RunConfig
from kronograph.models.classifier import ClassifierConfig, ClassifierModel, classify_forward
from kronograph.models.completion import CompletionConfig, CompletionModel, complete_forward
from kronograph.models.losses import completion_loss, cross_entropy_loss
from kronograph.models.metrics import confusion_matrix, metrics, rmse
from kronograph.models.optim import Adam, adam_step
from kronograph.numkit import ContractError, NumericError, Params, ShapeError, Tape, value_of
from kronograph.spectral import Graph
from kronograph.training import train
from kronograph.verify import classifier_gradient_errors

from conftest import sym


def _classifier(**kw):
    cfg = ClassifierConfig(n=5, c_in=3, m=3, K=2, d_out=4, num_classes=3, **kw)
    model = ClassifierModel(cfg)
    return model, model.init_params(0)


def test_zero_head_gives_uniform_probabilities(rng):
    model, params = _classifier()
    params["fc.W"] = np.zeros_like(params["fc.W"])
    probs = classify_forward(model, params, rng.uniform(size=(4, 5, 3)), sym(rng, 5))
    assert np.allclose(probs, np.full(3, 1 / 3), rtol=0, atol=1e-15)


def test_probabilities_sum_to_one(rng):
    model, params = _classifier()
    probs = classify_forward(model, params, rng.uniform(size=(6, 4, 5, 3)), sym(rng, 5))
    assert probs.shape == (6, 3)
    assert np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-14)
    assert np.all(probs >= 0)


def test_isolate_mode_differs_and_has_fewer_params(rng):
    full, pf = _classifier()
    iso, pi = _classifier(isolate_mode=True)
    x, A = rng.uniform(size=(4, 5, 3)), sym(rng, 5)
    assert np.max(np.abs(classify_forward(full, pf, x, A) - classify_forward(iso, pi, x, A))) > 1e-8
    assert pi.count() < pf.count()


def test_classic_kron_has_zero_lambda_gradients(rng):
    model, params = _classifier(classic_kron=True)
    tape = Tape(params)
    grads = tape.backward(model.loss(tape, rng.uniform(size=(2, 3, 5, 3)), sym(rng, 5), np.array([0, 2])))
    assert np.array_equal(grads["gp.lambda1"], np.zeros(3))
    assert np.array_equal(grads["gp.lambda2"], np.zeros(5))
    assert np.max(np.abs(grads["gp.theta"])) > 0


def test_classifier_gradients_match_finite_differences():
    assert max(classifier_gradient_errors().values()) <= 1e-4
    assert max(classifier_gradient_errors(classic_kron=True).values()) <= 1e-4


def test_classifier_config_errors():
    with pytest.raises(ContractError):
        ClassifierConfig(n=5, num_classes=1)
    with pytest.raises(ContractError):
        ClassifierConfig(n=5, output_mode="first")


def test_cross_entropy_examples():
    assert abs(cross_entropy_loss(np.full((1, 4), 0.25), [2]) - np.log(4)) < 1e-15
    assert cross_entropy_loss(np.array([[0.0, 1.0]]), [1]) == 0.0
    with pytest.raises(ShapeError):
        cross_entropy_loss(np.full((2, 2), 0.5), [0])
    with pytest.raises(ContractError):
        cross_entropy_loss(np.full((1, 2), 0.5), [2])


def test_completion_loss_examples():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    mask = np.array([[1, 0], [0, 1]], dtype=bool)
    assert float(value_of(completion_loss(M + 0.5, M, mask))) == 0.25
    X = np.array([[2.0, 0.0], [0.0, 1.0]])
    assert float(value_of(completion_loss(X, M, mask))) == (1.0 + 9.0) / 2
    assert float(value_of(completion_loss(X, M, mask, [np.ones(2)], weight_decay=0.5))) == 5.0 + 1.0
    with pytest.raises(ContractError):
        completion_loss(X, M, np.zeros((2, 2), dtype=bool))
    with pytest.raises(ShapeError):
        completion_loss(X, M, np.ones((3, 2), dtype=bool))


def test_metrics_example():
    pred = [0, 0, 1, 1, 2, 2]
    true = [0, 0, 1, 2, 2, 2]
    out = metrics(pred, true)
    assert abs(out["accuracy"] - 5 / 6) < 1e-15
    assert abs(out["macro_precision"] - (1 + 0.5 + 1) / 3) < 1e-15
    assert abs(out["macro_recall"] - (1 + 1 + 2 / 3) / 3) < 1e-15
    assert abs(out["macro_recall"] - 0.889) < 1e-3
    assert confusion_matrix(pred, true).tolist() == [[2, 0, 0], [0, 1, 0], [0, 1, 2]]


def test_metrics_match_sklearn(rng):
    for _ in range(20):
        true = rng.integers(0, 4, 50)
        pred = rng.integers(0, 4, 50)
        out = metrics(pred, true, 4)
        assert abs(out["accuracy"] - accuracy_score(true, pred)) < 1e-12
        assert abs(out["macro_precision"] - precision_score(true, pred, average="macro", zero_division=0)) < 1e-12
        assert abs(out["macro_recall"] - recall_score(true, pred, average="macro", zero_division=0)) < 1e-12


def test_metrics_errors():
    with pytest.raises(ContractError):
        metrics([], [])
    with pytest.raises(ShapeError):
        metrics([0, 1], [0])


def test_rmse_examples():
    M = np.zeros((2, 2))
    X = np.array([[3.0, 100.0], [4.0, 100.0]])
    mask = np.array([[1, 0], [1, 0]], dtype=bool)
    assert abs(rmse(X, M, mask) - np.sqrt(12.5)) < 1e-15
    with pytest.raises(ContractError):
        rmse(X, M, np.zeros((2, 2), dtype=bool))


def _completion_model(rng, **kw):
    m, n = 4, 5
    model = CompletionModel(CompletionConfig(**kw), Graph(np.abs(sym(rng, m))), Graph(np.abs(sym(rng, n))))
    return model, model.init_params(0)


def test_complete_forward_identity_layer(rng):
    model, params = _completion_model(rng, K=0, widths=(1,), activation="identity", residual=False,
                                      mask_channel=False)
    params["L0.W"] = np.ones((1, 1))
    params["proj.W"] = np.ones((1, 1))
    X = rng.uniform(size=(4, 5))
    mask = rng.uniform(size=(4, 5)) < 0.5
    assert np.array_equal(complete_forward(model, params, X, mask), X * mask)


def test_complete_forward_shape_and_errors(rng):
    model, params = _completion_model(rng)
    X = rng.uniform(size=(4, 5))
    assert complete_forward(model, params, X, np.ones((4, 5))).shape == (4, 5)
    with pytest.raises(ShapeError):
        complete_forward(model, params, X.T, np.ones((5, 4)))
    with pytest.raises(ContractError):
        complete_forward(model, params, X, np.full((4, 5), 0.5))
    with pytest.raises(ContractError):
        CompletionConfig(widths=())


def test_completion_classic_kron_freezes_lambdas(rng):
    model, params = _completion_model(rng, classic_kron=True)
    assert not any("lambda" in name for name in params.trainable())


def test_adam_zero_gradient_is_noop():
    params = Params({"x": np.array([1.0, -2.0])})
    opt = Adam(params, lr=0.1)
    opt.step({"x": np.zeros(2)})
    assert np.array_equal(params["x"], [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    params = Params({"x": np.array([1.0, -2.0])})
    opt = Adam(params, lr=0.1)
    adam_step(opt, params, {"x": np.array([3.0, -0.5])})
    assert np.allclose(params["x"], [0.9, -1.9], rtol=0, atol=1e-7)


def test_adam_quadratic_bowl():
    params = Params({"x": np.array([3.0, -4.0, 0.5])})
    opt = Adam(params, lr=0.05)
    for step in range(500):
        lr_scale = 0.5 * (1 + np.cos(np.pi * step / 500))
        opt.lr = 0.05 * lr_scale
        opt.step({"x": 2 * params["x"]})
    assert float(np.sum(params["x"] ** 2)) < 1e-6


def test_adam_rejects_non_finite():
    params = Params({"x": np.ones(2)})
    with pytest.raises(NumericError):
        Adam(params).step({"x": np.array([np.nan, 0.0])})
    with pytest.raises(ValueError):
        adam_step(Adam(params), Params({"x": np.ones(2)}), {"x": np.zeros(2)})


def test_rank_one_completion_recovers_matrix():
    cfg = RunConfig(task="complete", rank=1, density=0.6, data_seed=1, log_every=50).resolved()
    result = train(cfg)
    inst = datagen.gen_netflix(cfg.rows, cfg.cols, 1, density=0.6, seed=1)
    assert result.final["rmse"] < 0.05 * float(np.std(inst.M))
    losses = [r["loss"] for r in result.records]
    assert losses[-1] < 0.1 * losses[0]
