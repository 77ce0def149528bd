"""Confusion matrices and per-class / frequency-weighted precision, recall, F1."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix, LabelOutOfRange, LengthMismatch


def confusion(true_labels, predictions, n_classes=None) -> np.ndarray:
    """Rows are true classes, columns argmax predictions (ties -> lowest index).

    ``predictions`` may be an ``(n, K)`` probability array or a 1-d array
    of predicted class indices (then ``n_classes`` is required).
    """
    y = np.asarray(true_labels)
    pred = np.asarray(predictions)
    if pred.ndim == 2:
        n_classes = pred.shape[1] if n_classes is None else n_classes
        pred = pred.argmax(axis=1)
    elif n_classes is None:
        raise ValueError("n_classes is required when predictions are class indices")
    if len(y) != len(pred):
        raise LengthMismatch(f"{len(y)} labels vs {len(pred)} predictions")
    for arr in (y, pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelOutOfRange(f"class indices must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y.astype(np.intp), pred.astype(np.intp)), 1)
    return cm


@dataclass
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def rows(self, class_names=None):
        names = class_names or [str(k) for k in range(len(self.support))]
        for k, name in enumerate(names):
            yield name, self.precision[k], self.recall[k], self.f1[k], int(self.support[k])
        yield "__overall__", self.weighted_precision, self.weighted_recall, self.weighted_f1, int(self.support.sum())


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def f1_score(precision, recall):
    """Harmonic mean; 0 when both are 0."""
    return _safe_div(2.0 * np.asarray(precision) * recall, np.asarray(precision) + recall)


def scores(cm) -> ClassMetrics:
    cm = np.asarray(cm)
    if cm.size == 0 or cm.sum() == 0:
        raise EmptyMatrix("confusion matrix holds no samples")
    diag = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    precision = _safe_div(diag, cm.sum(axis=0))
    recall = _safe_div(diag, support)
    f1 = f1_score(precision, recall)
    total = support.sum()

    def weighted(v):
        return float((support * v).sum() / total)

    return ClassMetrics(precision, recall, f1, support, weighted(precision), weighted(recall), weighted(f1))


def evaluate(true_labels, probabilities) -> ClassMetrics:
    return scores(confusion(true_labels, probabilities))


def write_report(path, metrics: ClassMetrics, class_names=None):
    """Write ``class,precision,recall,f1,support`` rows plus a ``__overall__`` row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "precision", "recall", "f1", "support"])
        for name, p, r, f, s in metrics.rows(class_names):
            writer.writerow([name, f"{p:.6f}", f"{r:.6f}", f"{f:.6f}", s])
