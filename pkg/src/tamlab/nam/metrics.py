from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EvalMetrics:
    accuracy: float
    qos_guarantee: float
    confusion: np.ndarray   # rows: true class, row-stochastic where the class occurs
    prior: np.ndarray       # label frequencies
    n: int

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "qos_guarantee": self.qos_guarantee, "n": self.n,
                "prior": self.prior.tolist(), "confusion": self.confusion.tolist()}


def metrics_from_predictions(y_true, y_pred, n_classes: int) -> EvalMetrics:
    """Accuracy (pred == label), QoS guarantee (pred >= label) and confusion."""
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.size == 0:
        raise ValueError("cannot evaluate an empty dataset")
    counts = np.zeros((n_classes, n_classes))
    np.add.at(counts, (y_true, y_pred), 1.0)
    support = counts.sum(axis=1)
    confusion = np.divide(counts, support[:, None], out=np.zeros_like(counts), where=support[:, None] > 0)
    return EvalMetrics(
        accuracy=float(np.mean(y_pred == y_true)),
        qos_guarantee=float(np.mean(y_pred >= y_true)),
        confusion=confusion,
        prior=support / y_true.size,
        n=int(y_true.size),
    )


def evaluate(model, X, y) -> EvalMetrics:
    preds = np.concatenate([model.predict(X[s:s + 4096]) for s in range(0, len(X), 4096)]) if len(X) else []
    return metrics_from_predictions(y, preds, model.n_classes)
