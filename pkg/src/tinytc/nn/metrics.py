from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tinytc.errors import EmptyDataset


@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray
    per_class_f1: np.ndarray

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1}


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def classification_metrics(y_true, y_pred, n_classes: int | None = None) -> Metrics:
    """Accuracy, macro F1 and confusion matrix (rows = truth).

    Macro F1 averages over the classes that occur in either ``y_true`` or
    ``y_pred``; a class whose precision and recall are both zero scores 0.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0:
        raise EmptyDataset("cannot score an empty dataset")
    k = int(max(y_true.max(), y_pred.max()) + 1)
    n_classes = max(n_classes or 0, k)
    cm = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(cm).astype(float)
    pred_count = cm.sum(axis=0)
    true_count = cm.sum(axis=1)
    denom = pred_count + true_count
    f1 = np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)
    present = denom > 0
    return Metrics(
        accuracy=float(tp.sum() / len(y_true)),
        macro_f1=float(f1[present].mean()),
        confusion=cm,
        per_class_f1=f1,
    )


def evaluate(model, X, y, batch_size: int = 512) -> Metrics:
    """Score ``model`` (anything with ``predict``) on a labeled dataset."""
    if len(X) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    return classification_metrics(y, model.predict(X, batch_size), getattr(model, "n_classes", None))
