"""Classification metrics and expected calibration error."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .model import GmacnModel, forward

__all__ = [
    "PredictionLog",
    "ReliabilityBin",
    "classification_metrics",
    "ece",
    "evaluate",
    "EvaluationReport",
    "format_table",
]


@dataclass
class PredictionLog:
    """Predicted distributions with their true labels (one row per record)."""

    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.probabilities, dtype=np.float64))
        self.probabilities = p
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if len(self.labels) != len(p):
            raise ParameterError("one label per probability row required")
        if len(p) and np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
            raise ParameterError("each probability row must sum to 1 (+-1e-6)")

    def __len__(self):
        return len(self.labels)

    @property
    def predicted(self):
        return self.probabilities.argmax(axis=1)

    @property
    def confidence(self):
        return self.probabilities.max(axis=1)

    @classmethod
    def from_confidences(cls, confidences, correct):
        """Binary-style log: predicted class 0 with the given confidence.

        Handy for constructing calibration cases by hand.
        """
        c = np.asarray(confidences, dtype=np.float64)
        p = np.column_stack([c, 1.0 - c])
        labels = np.where(np.asarray(correct, dtype=bool), 0, 1)
        return cls(p, labels)


@dataclass
class ReliabilityBin:
    low: float
    high: float
    count: int
    mean_confidence: float
    accuracy: float


def classification_metrics(log: PredictionLog, classes: int):
    """Accuracy and macro precision / recall / F1.

    Every class in ``range(classes)`` enters the macro mean; a class with a
    zero denominator scores 0 there. Returns ``(acc, precision, recall, f1,
    per_class)`` where ``per_class`` lists counts and vacuity flags.
    """
    if len(log) == 0:
        raise ParameterError("cannot score an empty prediction log")
    pred, true = log.predicted, log.labels
    acc = float(np.mean(pred == true))
    precision, recall, f1, per_class = [], [], [], []
    for c in range(classes):
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
        per_class.append({
            "class": c, "tp": tp, "fp": fp, "fn": fn,
            "precision": p, "recall": r, "f1": f,
            "precision_undefined": tp + fp == 0,
            "recall_undefined": tp + fn == 0,
        })
    return acc, float(np.mean(precision)), float(np.mean(recall)), float(np.mean(f1)), per_class


def ece(log: PredictionLog, bins: int = 15):
    """Expected calibration error over equal-width confidence bins.

    Bins are right-closed, ``(lo, hi]``, except the first which also holds
    confidence 0. Returns ``(value, [ReliabilityBin, ...])``.
    """
    if len(log) == 0:
        raise ParameterError("cannot compute ECE of an empty log")
    if bins < 1:
        raise ParameterError(f"bins must be >= 1, got {bins}")
    conf = log.confidence
    correct = (log.predicted == log.labels).astype(np.float64)
    edges = np.linspace(0.0, 1.0, bins + 1)
    which = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, bins - 1)
    n = len(conf)
    total, table = 0.0, []
    for b in range(bins):
        mask = which == b
        k = int(mask.sum())
        if k:
            mc = float(np.mean(conf[mask]))
            ac = float(np.mean(correct[mask]))
            total += k / n * abs(ac - mc)
        else:
            mc = ac = 0.0
        table.append(ReliabilityBin(float(edges[b]), float(edges[b + 1]), k, mc, ac))
    return float(total), table


@dataclass
class EvaluationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    ece: float
    bins: list
    per_class: list
    count: int
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "ece": self.ece,
            "count": self.count,
            "per_class": self.per_class,
            "reliability": [vars(b) for b in self.bins],
            "config": self.config,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


def evaluate(model: GmacnModel, data, bins: int = 15) -> EvaluationReport:
    trace = forward(model, data.features)
    log = PredictionLog(trace.probabilities, data.labels)
    acc, pre, rec, f1, per_class = classification_metrics(log, model.config.classes)
    value, table = ece(log, bins)
    return EvaluationReport(acc, pre, rec, f1, value, table, per_class, len(log),
                            {"bins": bins, "model": model.config.to_dict()})


def format_table(report: EvaluationReport) -> str:
    lines = [
        f"{'Acc':>7} {'Pre':>7} {'Rec':>7} {'F1':>7} {'ECE':>7} {'n':>6}",
        f"{report.accuracy:7.3f} {report.precision:7.3f} {report.recall:7.3f} "
        f"{report.f1:7.3f} {report.ece:7.4f} {report.count:6d}",
        "",
        f"{'bin':>13} {'count':>6} {'conf':>7} {'acc':>7}",
    ]
    for b in report.bins:
        if b.count:
            lines.append(f"({b.low:.3f},{b.high:.3f}] {b.count:6d} "
                         f"{b.mean_confidence:7.3f} {b.accuracy:7.3f}")
    return "\n".join(lines)
