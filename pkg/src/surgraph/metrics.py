"""Classification metrics: confusion matrix, accuracy, macro F1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvalSet, LabelOutOfRange


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_f1: float
    per_class: tuple[ClassScore, ...]
    confusion: np.ndarray  # (num_classes, num_classes), rows = truth

    @property
    def micro_f1(self) -> float:
        # With one label per window, micro-averaged F1 collapses to accuracy.
        return self.accuracy


def confusion_matrix(truth, preds, num_classes: int) -> np.ndarray:
    """Counts indexed [true, predicted]."""
    truth = np.asarray(truth, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if truth.shape != preds.shape:
        raise ValueError(f"{truth.shape[0]} labels vs {preds.shape[0]} predictions")
    if truth.size == 0:
        raise EmptyEvalSet("no predictions to score")
    for name, arr in (("label", truth), ("prediction", preds)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise LabelOutOfRange(f"{name} outside [0, {num_classes})")
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (truth, preds), 1)
    return conf


def metrics_from_confusion(conf: np.ndarray) -> Metrics:
    """Accuracy is trace/total; macro F1 averages classes with support > 0."""
    conf = np.asarray(conf, dtype=np.int64)
    total = int(conf.sum())
    if total == 0:
        raise EmptyEvalSet("empty confusion matrix")
    accuracy = float(np.trace(conf)) / total

    scores = []
    f1_supported = []
    for c in range(conf.shape[0]):
        tp = float(conf[c, c])
        support = int(conf[c].sum())
        predicted = float(conf[:, c].sum())
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / support if support > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        scores.append(ClassScore(precision, recall, f1, support))
        if support > 0:
            f1_supported.append(f1)
    macro_f1 = float(np.mean(f1_supported)) if f1_supported else 0.0
    return Metrics(accuracy, macro_f1, tuple(scores), conf)


def compute_metrics(truth, preds, num_classes: int) -> Metrics:
    return metrics_from_confusion(confusion_matrix(truth, preds, num_classes))
