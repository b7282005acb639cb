"""Multi-label scores over binary tool flags"""

import logging
import warnings

import numpy as np
from sklearn.exceptions import UndefinedMetricWarning
from sklearn.metrics import accuracy_score, f1_score, roc_auc_score

from app.errors import ShapeError, UserInputError

logger = logging.getLogger(__name__)


def _check(y_true: np.ndarray, other: np.ndarray) -> None:
    if y_true.shape != other.shape or y_true.ndim != 2:
        raise ShapeError("tool labels/predictions", y_true.shape, other.shape)
    if y_true.shape[0] == 0:
        raise UserInputError("cannot score an empty set")


def micro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Micro-averaged F1 over all tool flags; 1.0 when there is nothing to find and nothing is predicted"""
    _check(y_true, y_pred)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UndefinedMetricWarning)
        return float(f1_score(y_true.astype(int), y_pred.astype(int), average="micro", zero_division=1.0))


def macro_auroc(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Mean ROC AUC over the tools whose labels contain both classes"""
    _check(y_true, scores)
    per_tool = [
        roc_auc_score(y_true[:, k], scores[:, k])
        for k in range(y_true.shape[1])
        if 0 < y_true[:, k].sum() < y_true.shape[0]
    ]
    if not per_tool:
        logger.warning("No tool has both classes in the labels; AUROC reported as 0.5")
        return 0.5
    return float(np.mean(per_tool))


def flag_accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Fraction of correct tool flags"""
    _check(y_true, y_pred)
    return float(accuracy_score(y_true.astype(int).ravel(), y_pred.astype(int).ravel()))
