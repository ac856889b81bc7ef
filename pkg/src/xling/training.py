"""Training protocol: seeded minibatch epochs, validation-monitored
early stopping, best-weights restoration.

The stopping rule: a monitor value improves only when it beats the best
seen by at least 1e-6 (lower is better for val_loss, higher for val_f1
and val_map).  Training halts once `patience` consecutive epochs fail to
improve, or at max_epochs.  With restore_best the parameters returned
are those of the best epoch.  A monitor that improves for 3 epochs and
then stalls under patience 5 therefore stops at exactly epoch 8.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import LabelEncoder
from .errors import ValidationError
from .metrics import MetricsReport, build_report, weighted_prf, confusion_matrix, mean_average_precision
from .neural.models import MODEL_KINDS, backward, forward_batch
from .neural.optim import adam_step, init_adam_state
from .seeding import derive_seed

MONITOR_VAL_LOSS = "val_loss"
MONITOR_VAL_F1 = "val_f1"
MONITOR_VAL_MAP = "val_map"
MONITORS = (MONITOR_VAL_LOSS, MONITOR_VAL_F1, MONITOR_VAL_MAP)

MIN_IMPROVEMENT = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    dropout: float = 0.5
    patience: int = 5
    max_epochs: int = 300
    seed: int = 0
    monitor: str = MONITOR_VAL_LOSS
    restore_best: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")
        if self.patience < 0:
            raise ValidationError("patience must be >= 0")
        if self.max_epochs < 0:
            raise ValidationError("max_epochs must be >= 0")
        if self.monitor not in MONITORS:
            raise ValidationError("unknown monitor {!r}".format(self.monitor))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    monitor: float


def monitor_mode(monitor: str) -> str:
    return "min" if monitor == MONITOR_VAL_LOSS else "max"


def run_training_loop(
    state,
    run_epoch: Callable,
    evaluate_epoch: Callable,
    *,
    max_epochs: int,
    patience: int,
    mode: str = "min",
    restore_best: bool = True,
):
    """Generic epoch loop with early stopping.

    run_epoch(state, epoch) -> (state, train_loss)
    evaluate_epoch(state, epoch) -> (val_loss, monitor_value)

    Returns (final state, history, stopped_epoch, best_epoch).  Epochs
    are 1-indexed; history has exactly stopped_epoch entries.
    """
    if mode not in ("min", "max"):
        raise ValidationError("mode must be 'min' or 'max'")
    sign = 1.0 if mode == "max" else -1.0
    history: list[EpochStats] = []
    best_value = None
    best_state = state
    best_epoch = 0
    since_improve = 0
    stopped = 0
    for epoch in range(1, max_epochs + 1):
        state, train_loss = run_epoch(state, epoch)
        val_loss, monitor_value = evaluate_epoch(state, epoch)
        history.append(EpochStats(epoch=epoch, train_loss=float(train_loss),
                                  val_loss=float(val_loss),
                                  monitor=float(monitor_value)))
        stopped = epoch
        improved = (best_value is None
                    or sign * (monitor_value - best_value) >= MIN_IMPROVEMENT)
        if improved:
            best_value = monitor_value
            best_state = state
            best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= patience:
                break
    final = best_state if restore_best else state
    return final, history, stopped, best_epoch


def _check_dataset(inputs, labels, num_classes: int, name: str):
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 3:
        raise ValidationError("{} inputs must be (N, T, d)".format(name))
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ValidationError("{} labels must be one int per input".format(name))
    if x.shape[0] == 0:
        raise ValidationError("{} set is empty".format(name))
    if y.min() < 0 or y.max() >= num_classes:
        raise ValidationError("{} labels outside [0, {})".format(name, num_classes))
    return x, y


def _monitor_value(monitor: str, val_loss: float, probs: np.ndarray,
                   labels: np.ndarray, num_classes: int) -> float:
    if monitor == MONITOR_VAL_LOSS:
        return val_loss
    preds = np.argmax(probs, axis=1)
    if monitor == MONITOR_VAL_F1:
        return weighted_prf(confusion_matrix(labels, preds, num_classes))[2]
    return mean_average_precision(probs, labels)


def _mean_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, 1e-12))))


def train(model_kind: str, params, train_set, val_set, cfg: TrainConfig):
    """Minibatch Adam training with early stopping.

    train_set and val_set are (inputs (N, T, d), labels (N,)) pairs.
    Returns (best params, history).  Fully determined by (params,
    data, cfg): shuffling, dropout, and the optimizer all derive their
    seeds from cfg.seed.
    """
    if model_kind not in MODEL_KINDS:
        raise ValidationError("unknown model kind {!r}".format(model_kind))
    num_classes = params.num_classes
    x_train, y_train = _check_dataset(train_set[0], train_set[1], num_classes, "train")
    x_val, y_val = _check_dataset(val_set[0], val_set[1], num_classes, "val")
    if x_train.shape[1:] != x_val.shape[1:]:
        raise ValidationError("train and val input shapes differ")
    n = x_train.shape[0]
    batches_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size

    def run_epoch(state, epoch):
        params_, adam = state
        rng = np.random.Generator(np.random.PCG64(derive_seed(cfg.seed, "shuffle", epoch)))
        order = rng.permutation(n)
        total = 0.0
        for b in range(batches_per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            drop_seed = derive_seed(cfg.seed, "dropout", (epoch - 1) * batches_per_epoch + b)
            grads, loss = backward(model_kind, params_, x_train[idx], y_train[idx],
                                   mode="train", seed=drop_seed)
            params_, adam = adam_step(params_, grads, adam, cfg.learning_rate)
            total += loss * len(idx)
        return (params_, adam), total / n

    def evaluate_epoch(state, epoch):
        params_, _ = state
        probs = forward_batch(model_kind, params_, x_val, mode="eval")
        val_loss = _mean_loss(probs, y_val)
        return val_loss, _monitor_value(cfg.monitor, val_loss, probs, y_val, num_classes)

    state = (params, init_adam_state(params))
    final_state, history, _, _ = run_training_loop(
        state, run_epoch, evaluate_epoch,
        max_epochs=cfg.max_epochs, patience=cfg.patience,
        mode=monitor_mode(cfg.monitor), restore_best=cfg.restore_best,
    )
    return final_state[0], history


def evaluate(params, model_kind: str, test_set, encoder: LabelEncoder) -> MetricsReport:
    """Eval-mode metrics on a held-out set.

    test_set labels may be raw strings (encoded here, unseen labels
    raise) or already-encoded class indices.
    """
    inputs, labels = test_set
    if len(labels) and isinstance(labels[0], str):
        labels = [encoder.encode(label) for label in labels]
    x, y = _check_dataset(inputs, labels, encoder.num_classes, "test")
    probs = forward_batch(model_kind, params, x, mode="eval")
    return build_report(probs, y, list(encoder.labels))
