"""ROC curves, AUC, Youden threshold selection, and confusion-matrix metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["RocCurve", "Metrics", "roc_curve", "auc", "youden_threshold",
           "confusion_metrics"]


@dataclass(frozen=True)
class RocCurve:
    """Operating points (threshold, FPR, TPR); predict positive iff score >= threshold.

    flipped records whether scores were negated so the curve sits above the
    diagonal (AUC >= 0.5). Thresholds refer to the (possibly negated) working
    scores; apply_threshold handles the flip for callers.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    flipped: bool

    def operating_points(self):
        return zip(self.thresholds, self.fpr, self.tpr)

    def classify(self, scores, threshold: float) -> np.ndarray:
        """Apply a threshold from this curve to raw scores, honoring the flip."""
        work = np.asarray(scores, dtype=np.float64)
        if self.flipped:
            work = -work
        return (work >= threshold).astype(int)


def _curve_points(scores: np.ndarray, labels: np.ndarray):
    """FPR/TPR at every distinct score threshold, plus the (0,0)/(1,1) ends."""
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    distinct = np.nonzero(np.diff(s))[0]
    cuts = np.concatenate([distinct, [s.size - 1]])
    tp_cum = np.cumsum(y)
    fp_cum = np.cumsum(1 - y)
    thresholds = s[cuts]
    tpr = tp_cum[cuts] / n_pos
    fpr = fp_cum[cuts] / n_neg
    # prepend the predict-nothing endpoint (threshold above every score)
    thresholds = np.concatenate([[np.inf], thresholds])
    tpr = np.concatenate([[0.0], tpr])
    fpr = np.concatenate([[0.0], fpr])
    return thresholds, fpr, tpr


def roc_curve(scores, labels) -> RocCurve:
    """ROC over every distinct score; orientation auto-flipped so AUC >= 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    if labels.min() == labels.max():
        raise ValueError("roc_curve needs both classes present")

    thr, fpr, tpr = _curve_points(scores, labels)
    area = float(np.trapezoid(tpr, fpr))
    flipped = area < 0.5
    if flipped:
        thr, fpr, tpr = _curve_points(-scores, labels)
    return RocCurve(thr, fpr, tpr, flipped)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    return float(np.trapezoid(curve.tpr, curve.fpr))


def youden_threshold(curve: RocCurve) -> tuple[float, float]:
    """Threshold maximizing J = TPR - FPR; ties broken toward higher sensitivity."""
    j = curve.tpr - curve.fpr
    best = 0
    for i in range(1, j.size):
        if j[i] > j[best] + 1e-15 or (abs(j[i] - j[best]) <= 1e-15
                                      and curve.tpr[i] > curve.tpr[best]):
            best = i
    return float(curve.thresholds[best]), float(j[best])


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    balanced_accuracy: float
    recall: float
    specificity: float
    ppv: float
    f1: float
    mcc: float
    auc: float | None = None
    ppv_undefined: bool = False

    def as_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "recall": self.recall,
            "specificity": self.specificity,
            "ppv": self.ppv,
            "f1": self.f1,
            "mcc": self.mcc,
        }
        if self.auc is not None:
            out["auc"] = self.auc
        return out


def confusion_metrics(pred, labels) -> Metrics:
    """Standard binary metrics; MCC with a zero denominator factor is 0."""
    pred = np.asarray(pred).astype(int)
    labels = np.asarray(labels).astype(int)
    if pred.shape != labels.shape:
        raise ValueError("pred and labels must have the same length")

    tp = int(((pred == 1) & (labels == 1)).sum())
    fp = int(((pred == 1) & (labels == 0)).sum())
    tn = int(((pred == 0) & (labels == 0)).sum())
    fn = int(((pred == 0) & (labels == 1)).sum())
    n = tp + fp + tn + fn

    accuracy = (tp + tn) / n if n else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    specificity = tn / (tn + fp) if tn + fp else 0.0
    balanced = (recall + specificity) / 2.0
    ppv_undefined = (tp + fp) == 0
    ppv = 0.0 if ppv_undefined else tp / (tp + fp)
    f1 = (2 * ppv * recall / (ppv + recall)) if (ppv + recall) > 0 else 0.0
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = 0.0 if denom == 0 else (tp * tn - fp * fn) / math.sqrt(denom)
    return Metrics(accuracy, balanced, recall, specificity, ppv, f1, mcc,
                   ppv_undefined=ppv_undefined)
