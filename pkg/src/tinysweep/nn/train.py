"""Minibatch training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DivergenceDetected, ShapeMismatch
from .model import (ModelSpec, TrainedModel, init_params, loss_and_gradients_raw,
                    predict_proba, run)
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 50
    seed: int = 7
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7
    shuffle: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


def accuracy(probs, labels) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


def train(spec: ModelSpec, train_ds, val_ds, config: TrainConfig) -> TrainedModel:
    """Train from a seeded initialization and return the final-epoch model."""
    spec.shapes()
    if train_ds.instances.shape[1:] != spec.input_shape:
        raise ShapeMismatch(
            f"train instances {train_ds.instances.shape[1:]} do not match spec {spec.input_shape}")
    rng = np.random.default_rng(config.seed)
    params = init_params(spec, rng)
    state = AdamState.zeros_like(params)
    x_all = train_ds.instances.astype(np.float64)
    y_all = train_ds.labels
    n = len(y_all)
    history = []
    shuffle_rng = np.random.default_rng([config.seed, 1])

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        tot_loss = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            drng = np.random.default_rng([config.seed, epoch, b])
            loss, grads = loss_and_gradients_raw(params, spec, x_all[idx], y_all[idx], drng)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"loss became {loss} at epoch {epoch}, batch {b}")
            params, state = adam_step(params, grads, state, config.learning_rate,
                                      config.adam_beta1, config.adam_beta2, config.adam_epsilon)
            if not all(np.all(np.isfinite(v)) for v in params.values()):
                raise DivergenceDetected(f"non-finite parameters at epoch {epoch}, batch {b}")
            tot_loss += loss * len(idx)
        entry = {"epoch": epoch, "loss": tot_loss / max(n, 1)}
        entry["train_accuracy"] = accuracy(_predict(params, spec, x_all), y_all)
        if val_ds is not None and len(val_ds):
            entry["val_accuracy"] = accuracy(
                _predict(params, spec, val_ds.instances.astype(np.float64)), val_ds.labels)
        history.append(entry)
        log.debug("epoch %d loss %.4f", epoch, entry["loss"])

    return TrainedModel(spec, params, history, train_ds.norm_mean, train_ds.norm_std)


def _predict(params, spec, x, batch=256):
    return np.concatenate([run(params, spec, x[i:i + batch])[0] for i in range(0, len(x), batch)])


def evaluate(model: TrainedModel, ds) -> float:
    return accuracy(predict_proba(model, ds.instances), ds.labels)
