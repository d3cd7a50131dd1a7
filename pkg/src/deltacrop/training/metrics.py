"""Confusion matrices and F1 scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass
class F1Report:
    confusion: np.ndarray  # rows = true class, columns = predicted class
    per_class: np.ndarray  # NaN for classes excluded from the mean
    macro: float

    def to_json(self) -> dict:
        return {
            "macro_f1": self.macro,
            "per_class_f1": [None if np.isnan(v) else float(v) for v in self.per_class],
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(predictions, labels, num_classes: int) -> np.ndarray:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ContractError(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise ContractError("cannot score an empty prediction set")
    for name, v in (("prediction", pred), ("label", true)):
        if v.min() < 0 or v.max() >= num_classes:
            raise ContractError(f"{name} outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def f1_from_confusion(cm: np.ndarray) -> F1Report:
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2 * tp / denom, np.nan)
    # a class that never occurs and is never predicted has denominator 0 and is left out
    macro = float(np.nanmean(f1)) if np.isfinite(f1).any() else 0.0
    return F1Report(cm, f1, macro)


def macro_f1(predictions, labels, num_classes: int) -> F1Report:
    return f1_from_confusion(confusion_matrix(predictions, labels, num_classes))


def binary_f1(predictions, labels, positive: int) -> float:
    """F1 of ``positive`` against every other class merged."""
    pred = np.asarray(predictions) == positive
    true = np.asarray(labels) == positive
    if pred.size == 0:
        raise ContractError("cannot score an empty prediction set")
    tp = int((pred & true).sum())
    denom = 2 * tp + int((pred & ~true).sum()) + int((~pred & true).sum())
    return 2 * tp / denom if denom else 0.0


def score(predictions, labels, num_classes: int, mode: str = "macro", positive: int = 0) -> float:
    """Headline metric: ``macro`` F1 or ``binary`` F1 of one class (e.g. paddy vs rest)."""
    if mode == "macro":
        return macro_f1(predictions, labels, num_classes).macro
    if mode == "binary":
        return binary_f1(predictions, labels, positive)
    raise ContractError(f"unknown metric mode {mode!r}")
