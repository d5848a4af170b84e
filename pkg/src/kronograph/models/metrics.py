"""Evaluation metrics."""
from __future__ import annotations

import numpy as np

from ..numkit.errors import ContractError, ShapeError


def confusion_matrix(predictions, labels, num_classes: int | None = None) -> np.ndarray:
    """Rows are true labels, columns are predictions."""
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ShapeError(f"predictions {pred.shape} and labels {true.shape} differ")
    if pred.size == 0:
        raise ContractError("metrics need at least one prediction")
    C = num_classes or int(max(pred.max(), true.max())) + 1
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def metrics(predictions, labels, num_classes: int | None = None) -> dict[str, float]:
    """Accuracy and macro-averaged precision/recall.

    Classes absent from both predictions and labels are skipped; a class that
    is never predicted contributes a precision of 0.
    """
    cm = confusion_matrix(predictions, labels, num_classes)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    present = (predicted + actual) > 0
    tp = np.diag(cm).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    return {
        "accuracy": float(tp.sum() / cm.sum()),
        "macro_precision": float(precision[present].mean()),
        "macro_recall": float(recall[present].mean()),
    }


def rmse(X_hat, M, test_mask) -> float:
    mask = np.asarray(test_mask, dtype=bool)
    if not mask.any():
        raise ContractError("rmse needs a non-empty test mask")
    diff = (np.asarray(X_hat) - np.asarray(M))[mask]
    return float(np.sqrt(np.mean(diff * diff)))
