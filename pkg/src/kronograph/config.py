"""Run configuration: defaults, presets, JSON files, CLI overrides and validation.

Values are layered as ``defaults < preset < config file < command-line flags``.
Unknown keys are rejected and every validation error names the offending key.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .numkit.errors import ContractError
from .numkit.ops import ACTIVATIONS
from .preserving import OUTPUT_MODES

TASKS = ("classify", "complete")
SCHEDULES = ("constant", "cosine")
TASK_ACTIVATION = {"classify": "relu", "complete": "tanh"}
SEED_ENV = "KRONOGRAPH_SEED"


class ConfigError(ContractError):
    """Invalid configuration; the message names the key."""


def _f(default, help: str, **kw):
    return field(default=default, metadata={"help": help, **kw})


@dataclass(frozen=True)
class RunConfig:
    task: str = _f("classify", "classify (sequence classification) or complete (matrix completion)", choices=TASKS)
    # model
    K: int = _f(2, "polynomial order; filters use K+1 coefficients")
    m: int = _f(8, "preserved node count of the pooling layer")
    d_out: int = _f(32, "output feature dimension of the preserving layer")
    widths: list = _f(None, "channel widths of the completion layers", item=int)
    activation: str | None = _f(None, "activation (null picks relu for classify, tanh for complete)",
                                choices=tuple(ACTIVATIONS))
    output_mode: str = _f("last", "classifier head input: last step output or mean over steps", choices=OUTPUT_MODES)
    rescale: bool = _f(True, "spectral rescaling of adjacencies before filtering")
    isolate_mode: bool = _f(False, "filter each frame graph in isolation (no cross-graph term)")
    classic_kron: bool = _f(False, "freeze lambda1 = lambda2 = 1 (plain Kronecker sum)")
    residual: bool = _f(True, "completion: add the masked input to the output")
    mask_channel: bool = _f(True, "completion: feed the observation mask as a second input channel")
    # optimizer
    lr: float = _f(None, "Adam learning rate (null picks 0.02 for classify, 0.01 for complete)")
    beta1: float = _f(0.9, "Adam first-moment decay")
    beta2: float = _f(0.999, "Adam second-moment decay")
    epochs: int = _f(None, "passes over the data (classify) or optimizer steps (complete); null picks a task default")
    batch_size: int = _f(50, "classify mini-batch size")
    weight_decay: float = _f(1e-5, "completion weight decay on mixing weights")
    lr_schedule: str = _f("cosine", "learning-rate schedule", choices=SCHEDULES)
    keep: float = _f(0.8, "completion: fraction of training entries shown as input per step")
    log_every: int = _f(100, "completion: steps between metric records")
    # data
    data: str | None = _f(None, "dataset directory written by `kronograph gen`; null generates in memory")
    num_train: int = _f(1000, "classify: generated training sequences")
    num_test: int = _f(500, "classify: generated test sequences")
    T: int = _f(12, "classify: frames per sequence")
    n: int = _f(15, "classify: joints per frame")
    classes: int = _f(2, "classify: class count")
    noise: float = _f(0.05, "classify: coordinate noise")
    subsample: int | None = _f(None, "classify: subsample sequences to this many frames")
    augment: bool = _f(False, "classify: random scale and rotation of training sequences")
    rows: int = _f(30, "complete: matrix rows")
    cols: int = _f(40, "complete: matrix columns")
    rank: int = _f(3, "complete: matrix rank")
    density: float = _f(0.5, "complete: training-mask density")
    noise_sd: float = _f(0.0, "complete: factor jitter")
    data_seed: int = _f(0, "seed of generated data")
    # run
    seed: int | None = _f(None, f"training seed (null falls back to ${SEED_ENV}, then 0)")
    threads: int = _f(1, "worker threads for batched evaluation")

    def resolved(self) -> "RunConfig":
        """Fill task-dependent defaults and the environment seed fallback."""
        classify = self.task == "classify"
        updates: dict[str, Any] = {}
        if self.activation is None:
            updates["activation"] = TASK_ACTIVATION.get(self.task, "tanh")
        if self.lr is None:
            updates["lr"] = 0.02 if classify else 0.01
        if self.epochs is None:
            updates["epochs"] = 3 if classify else 1500
        if self.widths is None:
            updates["widths"] = [8, 8]
        if self.seed is None:
            env = os.environ.get(SEED_ENV)
            try:
                updates["seed"] = int(env) if env not in (None, "") else 0
            except ValueError:
                raise ConfigError(f"environment variable {SEED_ENV} must be an integer, got {env!r}") from None
        return replace(self, **updates)

    def to_dict(self) -> dict:
        return asdict(self)


FIELDS = {f.name: f for f in fields(RunConfig)}

PRESETS: dict[str, dict[str, Any]] = {
    "tgcnn": {},
    "igcnn": {"isolate_mode": True},
    "classic-kron": {"classic_kron": True},
    "wide-50": {"m": 50, "d_out": 128},
    "wide-30": {"m": 30, "d_out": 80},
    "completion": {"task": "complete"},
}


def _type_name(f) -> str:
    t = str(f.type)
    for name in ("bool", "int", "float", "str", "list"):
        if t.startswith(name):
            return name
    raise AssertionError(t)


def _coerce(key: str, value: Any) -> Any:
    """Check and convert one value against the declared field type."""
    f = FIELDS[key]
    nullable = "None" in str(f.type) or f.default is None
    if value is None:
        if nullable:
            return None
        raise ConfigError(f"config key {key!r} may not be null")
    kind = _type_name(f)
    ok = {
        "bool": isinstance(value, bool),
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "str": isinstance(value, str),
        "list": isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value),
    }[kind]
    if not ok:
        raise ConfigError(f"config key {key!r} expects {kind}, got {value!r}")
    if kind == "float":
        value = float(value)
    choices = f.metadata.get("choices")
    if choices and value not in choices:
        raise ConfigError(f"config key {key!r} must be one of {list(choices)}, got {value!r}")
    return value


def parse_value(key: str, text: str) -> Any:
    """Convert a command-line string to the type of ``key``."""
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    if text.lower() in ("null", "none"):
        return _coerce(key, None)
    kind = _type_name(FIELDS[key])
    try:
        if kind == "bool":
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            value: Any = text.lower() in ("true", "1")
        elif kind == "int":
            value = int(text)
        elif kind == "float":
            value = float(text)
        elif kind == "list":
            value = [int(v) for v in text.split(",") if v.strip()]
        else:
            value = text
    except ValueError:
        raise ConfigError(f"config key {key!r} expects {kind}, got {text!r}") from None
    return _coerce(key, value)


def apply(config: RunConfig, updates: dict[str, Any]) -> RunConfig:
    for key in updates:
        if key not in FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    return replace(config, **{k: _coerce(k, v) for k, v in updates.items()})


def load_config_file(path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


def build_config(preset: str | None = None, file: str | None = None,
                 overrides: dict[str, Any] | None = None) -> RunConfig:
    config = RunConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        config = apply(config, PRESETS[preset])
    if file is not None:
        config = apply(config, load_config_file(file))
    if overrides:
        config = apply(config, overrides)
    config = config.resolved()
    validate(config)
    return config


def validate(config: RunConfig) -> None:
    """Shape-law and range checks, run before anything is allocated."""
    c = config

    def need(ok: bool, key: str, msg: str) -> None:
        if not ok:
            raise ConfigError(f"config key {key!r}: {msg}")

    for key in FIELDS:
        _coerce(key, getattr(c, key))
    for key in ("m", "d_out", "batch_size", "epochs", "num_train", "num_test", "classes", "rows", "cols",
                "rank", "log_every", "threads"):
        need(getattr(c, key) >= 1, key, "must be >= 1")
    need(c.K >= 0, "K", "must be >= 0")
    need(bool(c.widths) and min(c.widths) >= 1, "widths", "must be a non-empty list of positive integers")
    need(c.lr > 0, "lr", "must be positive")
    need(0 <= c.beta1 < 1, "beta1", "must lie in [0, 1)")
    need(0 <= c.beta2 < 1, "beta2", "must lie in [0, 1)")
    need(c.weight_decay >= 0, "weight_decay", "must be non-negative")
    need(0 < c.keep < 1, "keep", "must lie strictly between 0 and 1")
    need(c.T >= 2, "T", "must be >= 2")
    need(c.n >= 4, "n", "must be >= 4")
    need(c.classes >= 2, "classes", "must be >= 2")
    need(c.noise >= 0, "noise", "must be non-negative")
    need(c.subsample is None or 1 <= c.subsample <= c.T, "subsample", "must lie in [1, T]")
    need(c.rank <= min(c.rows, c.cols), "rank", "must not exceed min(rows, cols)")
    need(0 < c.density < 1, "density", "must lie strictly between 0 and 1")
    need(c.noise_sd >= 0, "noise_sd", "must be non-negative")
    need(not (c.isolate_mode and c.classic_kron), "classic_kron", "has no effect together with isolate_mode")


def schema() -> dict:
    """JSON schema of the config file format."""
    json_types = {"bool": "boolean", "int": "integer", "float": "number", "str": "string", "list": "array"}
    props = {}
    for name, f in FIELDS.items():
        kind = json_types[_type_name(f)]
        nullable = "None" in str(f.type) or f.default is None
        entry: dict[str, Any] = {"type": [kind, "null"] if nullable else kind,
                                 "default": f.default, "description": f.metadata["help"]}
        if kind == "array":
            entry["items"] = {"type": "integer"}
        if "choices" in f.metadata:
            entry["enum"] = list(f.metadata["choices"]) + ([None] if nullable else [])
        props[name] = entry
    return {"$schema": "https://json-schema.org/draft/2020-12/schema", "title": "kronograph run config",
            "type": "object", "additionalProperties": False, "properties": props}


_SWEEP = re.compile(r"^(\w+)=(.+)$")


def parse_sweep(text: str) -> tuple[str, list]:
    """``K=2..5`` (inclusive integer range) or ``key=a,b,c``."""
    match = _SWEEP.match(text.strip())
    if not match:
        raise ConfigError(f"sweep must look like KEY=LO..HI or KEY=A,B,C, got {text!r}")
    key, rhs = match.groups()
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r} in sweep")
    if ".." in rhs:
        lo, hi = rhs.split("..", 1)
        try:
            lo_i, hi_i = int(lo), int(hi)
        except ValueError:
            raise ConfigError(f"sweep range for {key!r} must be integers, got {rhs!r}") from None
        if hi_i < lo_i:
            raise ConfigError(f"sweep range for {key!r} is empty")
        return key, [parse_value(key, str(v)) for v in range(lo_i, hi_i + 1)]
    return key, [parse_value(key, v) for v in rhs.split(",")]
