"""Forecast metrics, kernel PCA, Fisher discriminant ratio, permutation attribution."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .baselines.base import _check_contiguous
from .errors import (
    DegenerateSigma,
    DegenerateVariance,
    EmptyInput,
    InvalidR,
    LengthMismatch,
    MissingClass,
    NonSymmetric,
)
from .timeseries import RegionSeries, concat

REGRET_UNDER_COST = 2.0
REGRET_OVER_COST = 1.0


def _pair(actual, predicted):
    a = np.asarray(actual, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if a.shape != p.shape:
        raise LengthMismatch(f"actual has {a.size} values, predicted {p.size}")
    if a.size == 0:
        raise EmptyInput("metrics need at least one value")
    return a, p


def nrmse(actual, predicted) -> float:
    """RMSE of per-unit values; capacity normalisation is already in ``y``."""
    a, p = _pair(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def crps_surrogate(actual, predicted) -> float:
    """CRPS of a point forecast, which is the mean absolute error."""
    a, p = _pair(actual, predicted)
    return float(np.mean(np.abs(a - p)))


def decision_regret(actual, predicted, a: float = REGRET_UNDER_COST,
                    b: float = REGRET_OVER_COST) -> float:
    """Mean asymmetric cost ``a * under + b * over``.

    Committing the true value costs nothing, so this cost is the regret
    against perfect information.
    """
    if not (a > 0 and b > 0):
        raise ValueError("cost coefficients must be positive")
    y, p = _pair(actual, predicted)
    return float(np.mean(a * np.maximum(y - p, 0.0) + b * np.maximum(p - y, 0.0)))


@dataclass(frozen=True)
class MetricsRecord:
    nrmse: float
    crps: float
    regret: float
    latency_ms: float = 0.0

    def __post_init__(self):
        for name in ("nrmse", "crps", "regret", "latency_ms"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self, include_latency: bool = True) -> dict:
        d = {"nrmse": self.nrmse, "crps": self.crps, "regret": self.regret}
        if include_latency:
            d["latency_ms"] = self.latency_ms
        return d

    @classmethod
    def from_dict(cls, d) -> "MetricsRecord":
        return cls(d["nrmse"], d["crps"], d["regret"], d.get("latency_ms", 0.0))


def evaluate(actual, predicted, latency_ms: float = 0.0) -> MetricsRecord:
    return MetricsRecord(nrmse(actual, predicted), crps_surrogate(actual, predicted),
                         decision_regret(actual, predicted), latency_ms)


def measure_latency(model, test: RegionSeries, warm_history: RegionSeries) -> float:
    """Mean wall-clock milliseconds per ``predict_one_step`` over the test window.

    One untimed pass runs first so caches and lazy allocations are warm.
    """
    _check_contiguous(warm_history, test)
    full = concat([warm_history, test])
    y, x = full.y, full.x
    need, start = model.lookback, len(warm_history)
    windows = [(y[pos - need:pos], x[pos - need:pos]) for pos in range(start, len(y))]
    for yh, xh in windows:
        model.predict_one_step(yh, xh)
    clock = time.perf_counter_ns
    total = 0
    for yh, xh in windows:
        t0 = clock()
        model.predict_one_step(yh, xh)
        total += clock() - t0
    return max(total, 1) / len(windows) / 1e6


# --------------------------------------------------------------------------
# Kernel PCA and separability
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmbeddingResult:
    projections: np.ndarray
    eigenvalues: np.ndarray
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"eigenvalues": self.eigenvalues.tolist(),
                "projections": self.projections.tolist(),
                "warnings": list(self.warnings)}


def center_gram(K: np.ndarray) -> np.ndarray:
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    return K - row - col + K.mean()


def kernel_pca(K, k: int = 1) -> EmbeddingResult:
    """Double-centre ``K`` and project onto its ``k`` leading directions.

    Projections are eigenvectors scaled by ``sqrt(eigenvalue)``; each
    eigenvector's largest-magnitude entry is made positive for a stable sign.
    Negative eigenvalues (indefinite kernels) are dropped with a warning.
    """
    K = np.asarray(getattr(K, "values", K), dtype=float)
    m = K.shape[0]
    if K.ndim != 2 or K.shape[1] != m:
        raise NonSymmetric(f"kernel matrix must be square, got {K.shape}")
    if not 1 <= k <= m:
        raise ValueError(f"component count must lie in [1, {m}], got {k}")
    scale = max(1.0, float(np.max(np.abs(K))))
    if np.max(np.abs(K - K.T)) > 1e-10 * scale:
        raise NonSymmetric("kernel matrix is not symmetric")
    Kc = center_gram(0.5 * (K + K.T))
    w, V = linalg.eigh(Kc)
    w, V = w[::-1], V[:, ::-1]
    tol = 1e-10 * max(1.0, float(np.max(np.abs(w))))
    warnings = []
    if np.any(w < -tol):
        warnings.append(f"dropped {int(np.sum(w < -tol))} negative eigenvalue(s); "
                        f"most negative {float(w.min()):.3e}")
    keep = np.flatnonzero(w >= -tol)[:k]
    if len(keep) < k:
        warnings.append(f"only {len(keep)} non-negative components available")
    lam = np.clip(w[keep], 0.0, None)
    vecs = V[:, keep]
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    return EmbeddingResult(vecs * np.sqrt(lam), lam, tuple(warnings))


def fisher_ratio(projections, labels) -> float:
    """``(mu1 - mu2)^2 / (var1 + var2)`` with population variances."""
    v = np.asarray(projections, dtype=float).reshape(-1)
    lab = np.asarray(labels).reshape(-1)
    if v.shape != lab.shape:
        raise LengthMismatch("projections and labels differ in length")
    classes = np.unique(lab)
    if len(classes) < 2:
        raise MissingClass("fisher_ratio needs two non-empty classes")
    if len(classes) > 2:
        raise ValueError(f"labels must be binary, found {len(classes)} values")
    a, b = v[lab == classes[0]], v[lab == classes[1]]
    spread = a.var() + b.var()
    if spread < 1e-12:
        raise DegenerateVariance("within-class variances sum to below 1e-12")
    return float((a.mean() - b.mean()) ** 2 / spread)


# --------------------------------------------------------------------------
# Permutation attribution
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AttributionVector:
    importances: np.ndarray
    repetitions: int
    sigma_y: float
    feature_names: tuple[str, ...] = ()
    seed: int = 0

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names),
                "importances": self.importances.tolist(),
                "repetitions": self.repetitions, "sigma_y": self.sigma_y, "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "AttributionVector":
        return cls(np.asarray(d["importances"], dtype=float), d["repetitions"], d["sigma_y"],
                   tuple(d["feature_names"]), d["seed"])


def permutation_indices(seed: int, feature: int, repetition: int, m: int) -> np.ndarray:
    """Row shuffle used for ``(feature, repetition)``; its own seeded substream."""
    return np.random.default_rng([int(seed), int(feature), int(repetition)]).permutation(m)


def permutation_attribution(predict: Callable[[np.ndarray], np.ndarray], X, y_actual, R: int = 5,
                            seed: int = 0, feature_names: Sequence[str] = (),
                            threads: int = 1) -> AttributionVector:
    """Mean absolute prediction change after shuffling each column, over ``sigma_y``.

    ``sigma_y`` is the population standard deviation of ``y_actual``.
    """
    if not isinstance(R, (int, np.integer)) or R < 1:
        raise InvalidR(f"repetitions must be a positive integer, got {R!r}")
    X = np.asarray(X, dtype=float)
    m, d = X.shape
    if m < 2:
        raise ValueError("permutation attribution needs at least two rows")
    sigma = float(np.std(np.asarray(y_actual, dtype=float)))
    if sigma < 1e-12:
        raise DegenerateSigma("standard deviation of the targets is below 1e-12")
    base = np.asarray(predict(X), dtype=float)

    def cell(task):
        j, r = task
        Xp = X.copy()
        Xp[:, j] = X[permutation_indices(seed, j, r, m), j]
        return float(np.mean(np.abs(np.asarray(predict(Xp), dtype=float) - base)))

    tasks = [(j, r) for j in range(d) for r in range(R)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            changes = list(pool.map(cell, tasks))
    else:
        changes = [cell(t) for t in tasks]
    imp = np.array(changes).reshape(d, R).sum(axis=1) / R / sigma
    names = tuple(feature_names) if feature_names else tuple(f"x{j}" for j in range(d))
    return AttributionVector(imp, int(R), sigma, names, int(seed))
