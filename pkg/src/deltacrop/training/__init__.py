"""Focal loss, Adadelta, F1 metrics, the per-fold loop and cross-validation."""

from .adadelta import AdadeltaState, DivergenceError, adadelta_step
from .cv import DEFAULT_GRID, CVResult, GridScore, cross_validate, selection_key
from .data import ChipInputs, Dataset, LabelMap, SequenceInputs
from .focal import FocalConfig, class_weights, focal_loss
from .loop import FoldResult, TrainConfig, check_disjoint, evaluate, load_result, predict, train_fold
from .metrics import F1Report, binary_f1, confusion_matrix, f1_from_confusion, macro_f1, score

__all__ = [
    "AdadeltaState",
    "CVResult",
    "ChipInputs",
    "DEFAULT_GRID",
    "Dataset",
    "DivergenceError",
    "F1Report",
    "FocalConfig",
    "FoldResult",
    "GridScore",
    "LabelMap",
    "SequenceInputs",
    "TrainConfig",
    "adadelta_step",
    "binary_f1",
    "check_disjoint",
    "class_weights",
    "confusion_matrix",
    "cross_validate",
    "evaluate",
    "f1_from_confusion",
    "focal_loss",
    "load_result",
    "macro_f1",
    "predict",
    "score",
    "selection_key",
    "train_fold",
]
