"""Classification accuracy, confusion-matrix accounting and frame timing."""
import time
from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvaluationError, ShapeMismatchError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts; the positive class is *billboard* (index 1)."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other):
        return ConfusionMatrix(
            self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn
        )

    @classmethod
    def from_labels(cls, y_true, y_pred):
        y_true = np.asarray(y_true, dtype=bool)
        y_pred = np.asarray(y_pred, dtype=bool)
        if y_true.shape != y_pred.shape:
            raise ShapeMismatchError(f"{y_true.shape} labels vs {y_pred.shape} predictions")
        return cls(
            tp=int(np.sum(y_true & y_pred)),
            tn=int(np.sum(~y_true & ~y_pred)),
            fp=int(np.sum(~y_true & y_pred)),
            fn=int(np.sum(y_true & ~y_pred)),
        )


def accuracy(cm):
    """(TP + TN) / (TP + TN + FP + FN)."""
    if cm.total == 0:
        raise EmptyEvaluationError("accuracy of an empty evaluation is undefined")
    return (cm.tp + cm.tn) / cm.total


def predicted_labels(probs):
    """Argmax over the class pair; an exact tie goes to index 0 (no billboard)."""
    return (probs[:, 1] > probs[:, 0]).astype(np.int64)


def predict(net, x):
    """Inference-mode labels [N] and class probabilities [N,2] for a batch."""
    if x.ndim != 4:
        raise ShapeMismatchError(f"predict expects [N,3,H,W], got {x.shape}")
    probs = net.forward(x, training=False)
    return predicted_labels(probs), probs


@dataclass(frozen=True)
class EvalReport:
    split: str
    confusion: ConfusionMatrix
    accuracy: float
    mean_ms: float
    p95_ms: float

    def to_text(self):
        cm = self.confusion
        return (
            f"split\t{self.split}\n"
            f"TP\t{cm.tp}\nTN\t{cm.tn}\nFP\t{cm.fp}\nFN\t{cm.fn}\n"
            f"accuracy\t{self.accuracy:.6f}\n"
            f"mean_ms\t{self.mean_ms:.3f}\np95_ms\t{self.p95_ms:.3f}\n"
        )


def evaluate(net, manifest, split, loader):
    """Score one manifest split frame by frame.

    Each record is pushed through the network on its own so the timing is
    per frame; the reported times cover the forward pass only.
    """
    records = manifest.split(split)
    if not records:
        raise EmptyEvaluationError(f"split {split!r} has no records")
    y_true, y_pred, times = [], [], []
    for r in records:
        x = loader(r)[None]
        start = time.perf_counter()
        labels, _ = predict(net, x)
        times.append((time.perf_counter() - start) * 1e3)
        y_true.append(r.label_index)
        y_pred.append(int(labels[0]))
    cm = ConfusionMatrix.from_labels(y_true, y_pred)
    return EvalReport(
        split, cm, accuracy(cm), float(np.mean(times)), float(np.percentile(times, 95))
    )
