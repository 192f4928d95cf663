"""Losses, optimizers, the training loop, evaluation and run artifacts."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import grad_model, loss_and_output_grad
from .circuit import CircuitConfig, ModelParams, count_parameters, forward, init_params
from .data import Dataset
from .errors import ConfigError, InputError

CHECKPOINT_FORMAT = "anovqc-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    loss_kind: str = "cross_entropy"
    seed: int = 0
    phi_init_std: float = 0.1
    head_init_std: float = 0.1
    theta_gradient: str = "adjoint"
    eval_batch_size: int = 256

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.loss_kind not in ("mse", "cross_entropy"):
            raise ConfigError(f"loss_kind must be 'mse' or 'cross_entropy', got {self.loss_kind!r}")
        if self.theta_gradient not in ("adjoint", "shift"):
            raise ConfigError(f"theta_gradient must be 'adjoint' or 'shift', got {self.theta_gradient!r}")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or self.epsilon <= 0:
            raise ConfigError("Adam needs 0 <= beta < 1 and epsilon > 0")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_accuracy: float
    wall_time: float = 0.0

    def record(self) -> dict:
        """The reproducible part (no timing), as written to ``metrics.jsonl``."""
        return {"epoch": self.epoch, "train_loss": self.train_loss, "test_accuracy": self.test_accuracy}


# ---------------------------------------------------------------------------
# losses


def mse_loss(outputs, target) -> float:
    """Squared error norm for one sample, or its batch mean for 2-D input."""
    outputs = np.asarray(outputs, dtype=float)
    target = np.asarray(target, dtype=float)
    if outputs.shape != target.shape:
        raise InputError(f"outputs {outputs.shape} and target {target.shape} differ in shape")
    if outputs.ndim == 1:
        return float(np.sum((outputs - target) ** 2))
    return loss_and_output_grad(outputs, target, "mse")[0]


def cross_entropy_loss(outputs, label) -> float:
    """``-log softmax(outputs)[label]``; batch mean for 2-D logits."""
    logits = np.atleast_2d(np.asarray(outputs, dtype=float))
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape[0] != logits.shape[0]:
        raise InputError(f"{labels.shape[0]} labels for {logits.shape[0]} rows of logits")
    if not np.issubdtype(labels.dtype, np.integer) or np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise InputError(f"label must be an integer in 0..{logits.shape[1] - 1}, got {label!r}")
    return loss_and_output_grad(logits, labels.astype(np.int64), "cross_entropy")[0]


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    learning_rate: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and new state."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise InputError("params, grads and optimizer state must share a shape")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grads
    v = beta2 * state.v + (1 - beta2) * grads**2
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return params - learning_rate * m_hat / (np.sqrt(v_hat) + epsilon), AdamState(m, v, t)


def sgd_step(params: np.ndarray, grads: np.ndarray, learning_rate: float) -> np.ndarray:
    return np.asarray(params, dtype=float) - learning_rate * np.asarray(grads, dtype=float)


# ---------------------------------------------------------------------------
# training and evaluation


def predict(params: ModelParams, circuit: CircuitConfig, features: np.ndarray, batch_size: int = 256) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    chunks = [
        np.atleast_2d(forward(features[i : i + batch_size], params, circuit))
        for i in range(0, features.shape[0], batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def evaluate_accuracy(params: ModelParams, circuit: CircuitConfig, dataset: Dataset, batch_size: int = 256) -> float:
    """Fraction of rows whose argmax output (lowest index on ties) equals the label."""
    if len(dataset) == 0:
        raise InputError("cannot evaluate accuracy on an empty dataset")
    outputs = predict(params, circuit, dataset.features, batch_size)
    return float(np.mean(np.argmax(outputs, axis=1) == dataset.labels))


def per_class_accuracy(params: ModelParams, circuit: CircuitConfig, dataset: Dataset, batch_size: int = 256) -> dict[int, float]:
    outputs = predict(params, circuit, dataset.features, batch_size)
    hits = np.argmax(outputs, axis=1) == dataset.labels
    return {int(c): float(np.mean(hits[dataset.labels == c])) for c in np.unique(dataset.labels)}


def fit(
    train: Dataset,
    config: TrainConfig,
    circuit: CircuitConfig,
    test: Dataset | None = None,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
    initial: ModelParams | None = None,
) -> tuple[ModelParams, list[EpochMetrics]]:
    """Mini-batch training; initialization and shuffling come from ``config.seed``.

    Per-epoch accuracy is measured on ``test`` (the training split if omitted).
    ``train_loss`` is the mean per-sample loss over the epoch's batches.
    """
    if train.n_features != circuit.n_qubits:
        raise ConfigError(f"dataset has {train.n_features} features but the circuit has {circuit.n_qubits} qubits")
    if len(train) == 0:
        raise InputError("training set is empty")
    if config.loss_kind == "cross_entropy" and train.n_classes > circuit.d_out:
        raise ConfigError(f"{train.n_classes} classes need d_out >= {train.n_classes}, got {circuit.d_out}")
    rng = np.random.default_rng(config.seed)
    params = initial.copy() if initial is not None else init_params(circuit, rng, config.phi_init_std, config.head_init_std)
    flat = params.flatten()
    adam = AdamState.zeros(flat.shape[0])
    evaluate_on = test if test is not None else train

    history = []
    m = len(train)
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(m)
        total = 0.0
        for i in range(0, m, config.batch_size):
            idx = order[i : i + config.batch_size]
            loss, grad = grad_model(
                train.features[idx], train.labels[idx], params, circuit, config.loss_kind, config.theta_gradient
            )
            total += loss * idx.shape[0]
            g = grad.flatten()
            if config.optimizer == "adam":
                flat, adam = adam_step(flat, g, adam, config.learning_rate, config.beta1, config.beta2, config.epsilon)
            else:
                flat = sgd_step(flat, g, config.learning_rate)
            params = ModelParams.from_flat(circuit, flat)
        acc = evaluate_accuracy(params, circuit, evaluate_on, config.eval_batch_size)
        metrics = EpochMetrics(epoch, total / m, acc, time.perf_counter() - start)
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    return params, history


# ---------------------------------------------------------------------------
# run artifacts


def save_checkpoint(path, params: ModelParams, circuit: CircuitConfig, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "circuit": circuit.to_dict(),
        "param_count": count_parameters(circuit),
        "params": params.flatten().tolist(),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, CircuitConfig, dict]:
    """Read a checkpoint; any structural problem is reported as a configuration error."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a checkpoint file")
    try:
        circuit = CircuitConfig.from_dict(doc["circuit"])
        flat = np.asarray(doc["params"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed checkpoint {path}: {exc}") from None
    try:
        params = ModelParams.from_flat(circuit, flat)
    except InputError as exc:
        raise ConfigError(f"checkpoint parameters do not match its circuit: {exc}") from None
    return params, circuit, doc.get("extra", {})


class JsonlWriter:
    """Append-only JSON-lines log, flushed after every record."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8")

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "JsonlWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def summarize_trials(accuracies: list[float]) -> dict:
    """Mean and population standard deviation of final test accuracies over seeds."""
    a = np.asarray(accuracies, dtype=float)
    return {"mean_test_accuracy": float(a.mean()), "std_test_accuracy": float(a.std()), "n_trials": int(a.size)}


def config_dict(config) -> dict:
    return asdict(config)
