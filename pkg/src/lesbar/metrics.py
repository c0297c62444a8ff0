"""Regression scoring: RMSE, cross-validation averaging, linear-mapped RMSE."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


def rmse(y, y_pred) -> float:
    """Root mean squared error between targets ``y`` and predictions ``y_pred``."""
    y = np.asarray(y, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_pred.shape}")
    if y.size == 0:
        raise ValueError("rmse of empty vectors is undefined")
    return float(np.sqrt(np.mean((y_pred - y) ** 2)))


def mapped_rmse(y, y_pred) -> tuple[float, float, float]:
    """RMSE after a first-order least-squares mapping of predictions.

    Fits ``a, b`` minimizing ``sum((a * y_pred + b - y)**2)`` and scores the
    mapped predictions against the untouched labels.

    Returns:
        ``(mapped_rmse, a, b)``.

    Raises:
        ValueError: on length mismatch, fewer than 2 samples, or constant
            predictions (the slope is undefined).
    """
    y = np.asarray(y, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_pred.shape}")
    if y.size < 2:
        raise ValueError("mapped_rmse needs at least 2 samples")
    var = float(np.mean((y_pred - y_pred.mean()) ** 2))
    if var < 1e-24:
        raise ValueError("constant predictions: linear mapping is undefined")
    cov = float(np.mean((y_pred - y_pred.mean()) * (y - y.mean())))
    a = cov / var
    b = float(y.mean()) - a * float(y_pred.mean())
    return rmse(y, a * y_pred + b), a, b


def cv_average(per_fold_rmse) -> float:
    """Arithmetic mean of per-fold RMSE values."""
    values = [float(v) for v in per_fold_rmse]
    if not values:
        raise ValueError("no fold scores to average")
    return float(np.mean(values))


@dataclass(frozen=True)
class ScoreReport:
    """Evaluation summary for one prediction set."""

    n: int
    rmse: float
    mapped_rmse: float
    a: float
    b: float

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "rmse": self.rmse, "mapped_rmse": self.mapped_rmse,
             "a": self.a, "b": self.b},
            indent=2,
        )


def evaluate_predictions(y, y_pred) -> ScoreReport:
    """Score predictions with both raw and linearly mapped RMSE."""
    raw = rmse(y, y_pred)
    mapped, a, b = mapped_rmse(y, y_pred)
    return ScoreReport(n=int(np.asarray(y).size), rmse=raw, mapped_rmse=mapped, a=a, b=b)
