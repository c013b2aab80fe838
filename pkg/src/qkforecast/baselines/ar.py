"""Autoregressive baseline fitted by least squares on the normal equations."""
from __future__ import annotations

import numpy as np
from scipy import linalg

from ..errors import InsufficientData, SingularSystem
from ..timeseries import RegionSeries
from .base import Forecaster, clip01

AR_JITTER = 1e-10
_PIVOT_RTOL = 1e-13


def lag_matrix(y: np.ndarray, p: int) -> np.ndarray:
    """Row ``r`` holds ``y[r+p-1], ..., y[r]`` (newest lag first)."""
    n = len(y) - p
    return np.column_stack([y[p - k:p - k + n] for k in range(1, p + 1)])


def _cholesky_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, low = linalg.cho_factor(a, lower=True, check_finite=True)
    piv = np.abs(np.diag(c))
    if piv.min() <= _PIVOT_RTOL * piv.max():
        raise linalg.LinAlgError("numerically singular normal matrix")
    return linalg.cho_solve((c, low), b)


def solve_normal_equations(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Solve ``(X'X) beta = X'y`` by Cholesky, retrying once with diagonal jitter."""
    a = design.T @ design
    b = design.T @ target
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SingularSystem("AR normal equations contain non-finite values")
    try:
        return _cholesky_solve(a, b)
    except linalg.LinAlgError:
        pass
    scale = max(1.0, float(np.mean(np.diag(a))))
    try:
        return _cholesky_solve(a + AR_JITTER * scale * np.eye(len(a)), b)
    except linalg.LinAlgError:
        raise SingularSystem("AR normal matrix is rank deficient even after jitter") from None


class ArModel(Forecaster):
    """AR(p) with intercept: ``y(t) = intercept + sum_k coeffs[k-1] * y(t-k)``."""

    kind = "ar"

    def __init__(self, p: int = 24, coeffs=None, intercept: float = 0.0):
        if p < 1:
            raise ValueError("lag order p must be >= 1")
        self.p = int(p)
        self.coeffs = None if coeffs is None else np.asarray(coeffs, dtype=float)
        self.intercept = float(intercept)
        if self.coeffs is not None and self.coeffs.shape != (self.p,):
            raise ValueError(f"expected {self.p} coefficients, got {self.coeffs.shape}")

    @property
    def lookback(self) -> int:
        return self.p

    def fit(self, train: RegionSeries) -> "ArModel":
        fitted = fit_ar(train, self.p)
        self.coeffs, self.intercept = fitted.coeffs, fitted.intercept
        return self

    def predict_one_step(self, y_hist, x_hist) -> float:
        lags = np.asarray(y_hist[-1:-self.p - 1:-1], dtype=float)
        return clip01(self.intercept + float(self.coeffs @ lags))

    def to_dict(self) -> dict:
        return {"p": self.p, "coeffs": self.coeffs.tolist(), "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d) -> "ArModel":
        return cls(d["p"], d["coeffs"], d["intercept"])


def fit_ar_array(y: np.ndarray, p: int = 24) -> ArModel:
    y = np.asarray(y, dtype=float)
    if len(y) <= p + 1:
        raise InsufficientData(f"AR({p}) needs more than {p + 1} samples, got {len(y)}")
    design = np.column_stack([np.ones(len(y) - p), lag_matrix(y, p)])
    beta = solve_normal_equations(design, y[p:])
    return ArModel(p, beta[1:], beta[0])


def fit_ar(train: RegionSeries, p: int = 24) -> ArModel:
    return fit_ar_array(train.y, p)
