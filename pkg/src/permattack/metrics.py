"""Regression and classification quality measures.

Conventions for degenerate cases, fixed here and relied on by reports:

* R^2 with SST == 0 returns 1.0 when SSR == 0 (perfect constant fit) and 0.0
  otherwise, avoiding the division by zero.
* MAPE skips targets equal to zero (bit targets make zero common) and returns
  0.0 when every target is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class Metrics:
    mse: float
    rmse: float
    r2: float
    mae: float
    mape: float
    loss: float | None = None
    accuracy: float | None = None

    def as_dict(self) -> dict:
        d = {"mse": self.mse, "rmse": self.rmse, "r2": self.r2, "mae": self.mae, "mape": self.mape}
        if self.loss is not None:
            d["loss"] = self.loss
        if self.accuracy is not None:
            d["accuracy"] = self.accuracy
        return d


def _paired(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    return pred, target


def metric_mse(pred, target) -> float:
    pred, target = _paired(pred, target)
    return float(np.mean((target - pred) ** 2))


def metric_r2(pred, target) -> float:
    """Coefficient of determination 1 - SSR/SST."""
    pred, target = _paired(pred, target)
    ssr = float(np.sum((target - pred) ** 2))
    sst = float(np.sum((target - target.mean()) ** 2))
    if sst == 0.0:
        return 1.0 if ssr == 0.0 else 0.0
    return 1.0 - ssr / sst


def metric_mae(pred, target) -> float:
    pred, target = _paired(pred, target)
    return float(np.mean(np.abs(target - pred)))


def metric_mape(pred, target) -> float:
    """Mean absolute percentage error over targets != 0."""
    pred, target = _paired(pred, target)
    mask = target != 0.0
    if not mask.any():
        return 0.0
    return float(np.mean(np.abs((target[mask] - pred[mask]) / target[mask])))


def residuals(pred, target) -> np.ndarray:
    """r_i = y_i - yhat_i."""
    pred, target = _paired(pred, target)
    return target - pred


def metric_accuracy(pred_classes, labels) -> float:
    pred_classes = np.asarray(pred_classes).ravel()
    labels = np.asarray(labels).ravel()
    if pred_classes.shape != labels.shape:
        raise ShapeError("class arrays must match")
    return float(np.mean(pred_classes == labels))


def metric_suite(pred, target) -> Metrics:
    """All regression metrics at once; rmse is sqrt(mse) by construction."""
    mse = metric_mse(pred, target)
    return Metrics(
        mse=mse,
        rmse=float(np.sqrt(mse)),
        r2=metric_r2(pred, target),
        mae=metric_mae(pred, target),
        mape=metric_mape(pred, target),
    )
