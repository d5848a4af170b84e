"""Training and evaluation loops behind the ``train``, ``eval`` and sweep commands.

Metrics are emitted as one JSON object per line.  Wall-clock time is only
included on request so that repeated runs produce byte-identical output.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import datagen
from .config import RunConfig
from .datagen import CompletionInstance, make_rng
from .models import (Adam, ClassifierConfig, ClassifierModel, CompletionConfig, CompletionModel,
                     complete_forward, completion_loss, metrics, rmse)
from .numkit import Tape, load_checkpoint, restore_params, save_checkpoint
from .numkit.errors import ContractError
from .numkit.tape import Params

EVAL_CHUNK = 100

Emit = Callable[[dict], None]


def format_record(record: dict) -> str:
    return json.dumps(record, sort_keys=False)


@dataclass
class SequenceData:
    train_frames: np.ndarray
    train_labels: np.ndarray
    test_frames: np.ndarray
    test_labels: np.ndarray
    adj: np.ndarray


@dataclass
class TrainResult:
    config: RunConfig
    params: Params
    records: list[dict]
    final: dict


# ---- data ---------------------------------------------------------------

def load_sequence_data(config: RunConfig) -> SequenceData:
    if config.data:
        train, test = datagen.load_sequence_dataset(config.data)
    else:
        samples = datagen.gen_dynseq(config.num_train + config.num_test, classes=config.classes, T=config.T,
                                     n=config.n, seed=config.data_seed, noise=config.noise)
        train, test = samples[:config.num_train], samples[config.num_train:]
    Xtr, adj, ytr = datagen.stack_samples(train)
    Xte, _, yte = datagen.stack_samples(test)
    if config.subsample is not None:
        Xte = np.stack([datagen.temporal_subsample(x, config.subsample) for x in Xte])
    return SequenceData(Xtr, ytr, Xte, yte, adj)


def load_completion_data(config: RunConfig) -> CompletionInstance:
    if config.data:
        return datagen.load_completion(config.data)
    return datagen.gen_netflix(config.rows, config.cols, config.rank, density=config.density,
                               noise_sd=config.noise_sd, seed=config.data_seed)


def load_data(config: RunConfig):
    return load_sequence_data(config) if config.task == "classify" else load_completion_data(config)


# ---- models ---------------------------------------------------------------

def classifier_config(config: RunConfig, data: SequenceData) -> ClassifierConfig:
    _, _, n, c_in = data.train_frames.shape
    return ClassifierConfig(n=n, c_in=c_in, m=config.m, K=config.K, d_out=config.d_out,
                            num_classes=max(config.classes, int(data.train_labels.max()) + 1),
                            activation=config.activation, output_mode=config.output_mode,
                            rescale=config.rescale, isolate_mode=config.isolate_mode,
                            classic_kron=config.classic_kron)


def completion_config(config: RunConfig) -> CompletionConfig:
    return CompletionConfig(K=config.K, widths=tuple(config.widths), activation=config.activation,
                            residual=config.residual, mask_channel=config.mask_channel,
                            rescale=config.rescale, classic_kron=config.classic_kron)


def build_model(config: RunConfig, data):
    if config.task == "classify":
        return ClassifierModel(classifier_config(config, data))
    return CompletionModel(completion_config(config), data.row_graph, data.col_graph)


def learning_rate(config: RunConfig, step: int, total: int) -> float:
    if config.lr_schedule == "constant" or total <= 1:
        return config.lr
    return config.lr * 0.5 * (1.0 + math.cos(math.pi * step / total))


# ---- evaluation -----------------------------------------------------------

def predict_sequences(model: ClassifierModel, params: Params, frames: np.ndarray, adj, threads: int = 1):
    """Class predictions in fixed-size chunks, assembled in order.

    Chunk boundaries do not depend on ``threads``, so results are identical
    for any thread count.
    """
    chunks = [frames[i:i + EVAL_CHUNK] for i in range(0, len(frames), EVAL_CHUNK)]
    run = lambda chunk: model.predict(params, chunk, adj)  # noqa: E731
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts)


def evaluate(config: RunConfig, model, params: Params, data) -> dict:
    """Test-set metrics; the same code path serves training logs and ``eval``."""
    if config.task == "classify":
        pred = predict_sequences(model, params, data.test_frames, data.adj, config.threads)
        return metrics(pred, data.test_labels, model.config.num_classes)
    X_hat = complete_forward(model, params, data.M, data.train_mask)
    return {"rmse": rmse(X_hat, data.M, data.test_mask)}


# ---- training -------------------------------------------------------------

def _augment_batch(config: RunConfig, frames: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if config.subsample is None and not config.augment:
        return frames
    out = []
    for x in frames:
        if config.subsample is not None:
            x = datagen.temporal_subsample(x, config.subsample, "random", int(rng.integers(2**62)))
        if config.augment:
            x, _ = datagen.random_scale(x, int(rng.integers(2**62)))
            x, _ = datagen.random_rotate(x, int(rng.integers(2**62)))
        out.append(x)
    return np.stack(out)


def _train_classifier(config, model, params, data, emit, timing):
    opt = Adam(params, lr=config.lr, betas=(config.beta1, config.beta2))
    rng = make_rng(config.seed)
    N = len(data.train_labels)
    per_epoch = math.ceil(N / config.batch_size)
    total = config.epochs * per_epoch
    records, start, step = [], time.perf_counter(), 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(N)
        loss_sum = 0.0
        for b in range(0, N, config.batch_size):
            idx = order[b:b + config.batch_size]
            frames = _augment_batch(config, data.train_frames[idx], rng)
            tape = Tape(params)
            loss = model.loss(tape, frames, data.adj, data.train_labels[idx])
            tape.backward(loss)
            opt.lr = learning_rate(config, step, total)
            opt.step(params.grads)
            loss_sum += float(loss.value) * len(idx)
            step += 1
        record = {"epoch": epoch, "loss": loss_sum / N, **evaluate(config, model, params, data)}
        if timing:
            record["wall_s"] = round(time.perf_counter() - start, 3)
        records.append(record)
        emit(record)
    return records


def _train_completion(config, model, params, data, emit, timing):
    opt = Adam(params, lr=config.lr, betas=(config.beta1, config.beta2))
    rng = make_rng(config.seed)
    M, train = data.M, data.train_mask
    records, start = [], time.perf_counter()
    for step in range(1, config.epochs + 1):
        # Show a random part of the known entries and fit the hidden remainder.
        shown = train & (rng.random(M.shape) < config.keep)
        hidden = train & ~shown
        if not hidden.any() or not shown.any():
            continue
        tape = Tape(params)
        out = model.forward(tape, M, shown)
        loss = completion_loss(out, M, hidden, model.weight_nodes(tape), config.weight_decay)
        tape.backward(loss)
        opt.lr = learning_rate(config, step - 1, config.epochs)
        opt.step(params.grads)
        if step % config.log_every == 0 or step == config.epochs:
            record = {"epoch": step, "loss": float(loss.value), **evaluate(config, model, params, data)}
            if timing:
                record["wall_s"] = round(time.perf_counter() - start, 3)
            records.append(record)
            emit(record)
    return records


def train(config: RunConfig, emit: Emit | None = None, timing: bool = False, data=None) -> TrainResult:
    emit = emit or (lambda record: None)
    data = data if data is not None else load_data(config)
    model = build_model(config, data)
    params = model.init_params(config.seed)
    loop = _train_classifier if config.task == "classify" else _train_completion
    records = loop(config, model, params, data, emit, timing)
    if not records:
        raise ContractError("training produced no metric records")
    final = {k: v for k, v in records[-1].items() if k not in ("epoch", "loss", "wall_s")}
    return TrainResult(config, params, records, final)


def save_result(path, result: TrainResult) -> None:
    save_checkpoint(path, result.params, {"config": result.config.to_dict(), "final": result.final})


def evaluate_checkpoint(path, data_dir: str | None = None) -> tuple[RunConfig, dict]:
    """Rebuild the model from a checkpoint and recompute the test metrics."""
    stored, meta = load_checkpoint(path)
    if "config" not in meta:
        raise ContractError(f"checkpoint {path} carries no run config")
    config = RunConfig(**meta["config"])
    if data_dir is not None:
        config = replace(config, data=str(data_dir))
    data = load_data(config)
    model = build_model(config, data)
    params = model.init_params(config.seed)
    restore_params(params, stored)
    return config, evaluate(config, model, params, data)


def sweep(config: RunConfig, key: str, values: list, emit: Emit, timing: bool = False) -> list[dict]:
    """Train once per value; numeric failures are reported, not raised."""
    from .numkit.errors import NumericError

    data = load_data(config)
    out = []
    for value in values:
        cfg = replace(config, **{key: value})
        try:
            result = train(cfg, timing=timing, data=data)
            record = {key: value, "status": "ok", **result.final}
        except NumericError as exc:
            record = {key: value, "status": "numeric_failure", "error": str(exc)}
        out.append(record)
        emit(record)
    return out
