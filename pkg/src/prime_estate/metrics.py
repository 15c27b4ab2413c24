"""The five regression quality scores used to compare models."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError, ZeroVariance


@dataclass(frozen=True)
class MetricBundle:
    e_var: float
    mae: float
    medae: float
    mse: float
    r2: float

    FIELDS = ("e_var", "mae", "medae", "mse", "r2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MetricBundle":
        return cls(**{k: float(d[k]) for k in cls.FIELDS})


def _pair(y_true, y_pred):
    y = np.asarray(y_true, dtype=float).ravel()
    yhat = np.asarray(y_pred, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise DataError(f"length mismatch: {y.size} targets vs {yhat.size} predictions")
    if y.size == 0:
        raise DataError("empty prediction set")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise DataError("prediction set contains non-finite values")
    return y, yhat


def explained_variance(y_true, y_pred) -> float:
    """1 - Var(y - yhat) / Var(y), with population variances."""
    y, yhat = _pair(y_true, y_pred)
    var_y = np.var(y)
    if var_y == 0:
        raise ZeroVariance("y")
    return float(1.0 - np.var(y - yhat) / var_y)


def mean_absolute_error(y_true, y_pred) -> float:
    y, yhat = _pair(y_true, y_pred)
    return float(np.mean(np.abs(y - yhat)))


def median_absolute_error(y_true, y_pred) -> float:
    # np.median averages the two central order statistics for even n
    y, yhat = _pair(y_true, y_pred)
    return float(np.median(np.abs(y - yhat)))


def mean_squared_error(y_true, y_pred) -> float:
    y, yhat = _pair(y_true, y_pred)
    return float(np.mean((y - yhat) ** 2))


def r2(y_true, y_pred) -> float:
    y, yhat = _pair(y_true, y_pred)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ZeroVariance("y")
    return float(1.0 - np.sum((y - yhat) ** 2) / ss_tot)


def evaluate(y_true, y_pred) -> MetricBundle:
    return MetricBundle(
        e_var=explained_variance(y_true, y_pred),
        mae=mean_absolute_error(y_true, y_pred),
        medae=median_absolute_error(y_true, y_pred),
        mse=mean_squared_error(y_true, y_pred),
        r2=r2(y_true, y_pred),
    )
