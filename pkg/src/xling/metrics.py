"""Classification metrics computed from scratch.

Weighted precision/recall/F1 come from the confusion matrix with
support-weighted averaging; zero denominators contribute zero.  Mean
average precision is the macro average over classes of one-vs-rest
average precision, ranking samples by predicted class probability with
ties broken by sample index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Counts with true classes on rows and predicted classes on columns."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError("y_true and y_pred must be equal-length 1-d arrays")
    if y_true.size == 0:
        raise ValidationError("cannot build a confusion matrix from zero samples")
    if y_true.min() < 0 or y_true.max() >= num_classes:
        raise ValidationError("true label outside [0, num_classes)")
    if y_pred.min() < 0 or y_pred.max() >= num_classes:
        raise ValidationError("predicted label outside [0, num_classes)")
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (y_true, y_pred), 1)
    return out


def per_class_prf(confusion: np.ndarray):
    """Arrays (precision, recall, f1, support) indexed by class."""
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ValidationError("confusion matrix must be square")
    if np.any(confusion < 0):
        raise ValidationError("confusion matrix has negative counts")
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom,
                   out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1, support


def weighted_prf(confusion: np.ndarray) -> tuple[float, float, float]:
    """Support-weighted (precision, recall, f1)."""
    precision, recall, f1, support = per_class_prf(confusion)
    total = support.sum()
    if total == 0:
        raise ValidationError("confusion matrix has no samples")
    weights = support / total
    return (
        float(np.sum(weights * precision)),
        float(np.sum(weights * recall)),
        float(np.sum(weights * f1)),
    )


def accuracy(confusion: np.ndarray) -> float:
    confusion = np.asarray(confusion)
    total = confusion.sum()
    if total == 0:
        raise ValidationError("confusion matrix has no samples")
    return float(np.trace(confusion) / total)


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """One-vs-rest AP: mean precision-at-k over the positive ranks.

    Samples are ranked by descending score with ties broken by index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValidationError("scores and positives must be equal-length 1-d arrays")
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise ValidationError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    ranked = positives[order]
    hits = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    prec_at_hit = hits[ranked] / ranks[ranked]
    return float(np.mean(prec_at_hit))


def mean_average_precision(probs: np.ndarray, labels) -> float:
    """Macro AP over classes; classes with zero positives are skipped.

    Skipped classes are reported through the module logger.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise ValidationError("probs must be (N, C) matching N labels")
    aps = []
    skipped = []
    for c in range(probs.shape[1]):
        positives = labels == c
        if not positives.any():
            skipped.append(c)
            continue
        aps.append(average_precision(probs[:, c], positives))
    if skipped:
        logger.warning("classes without positives skipped in mAP: %s", skipped)
    if not aps:
        raise ValidationError("every class had zero positives")
    return float(np.mean(aps))


@dataclass(frozen=True)
class MetricsReport:
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    accuracy: float
    mean_average_precision: float
    per_class: dict[str, dict[str, float]]
    confusion: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "accuracy": self.accuracy,
            "map": self.mean_average_precision,
            "per_class": self.per_class,
            "confusion": [[int(v) for v in row] for row in self.confusion],
        }


def build_report(probs: np.ndarray, labels, class_names: list[str]) -> MetricsReport:
    """Full report from predicted probabilities and true class indices."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = len(class_names)
    if probs.shape[1] != num_classes:
        raise ValidationError("probability width does not match class count")
    preds = np.argmax(probs, axis=1)
    conf = confusion_matrix(labels, preds, num_classes)
    precision, recall, f1, support = per_class_prf(conf)
    wp, wr, wf = weighted_prf(conf)
    per_class = {
        name: {
            "precision": float(precision[i]),
            "recall": float(recall[i]),
            "f1": float(f1[i]),
            "support": int(support[i]),
        }
        for i, name in enumerate(class_names)
    }
    return MetricsReport(
        weighted_precision=wp,
        weighted_recall=wr,
        weighted_f1=wf,
        accuracy=accuracy(conf),
        mean_average_precision=mean_average_precision(probs, labels),
        per_class=per_class,
        confusion=conf,
    )
