"""One-step-ahead forecasting contract, rolling evaluation and residuals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientHistory, IrregularCadence
from ..timeseries import MINUTES_PER_HOUR, RegionSeries, concat


def clip01(v: float) -> float:
    return min(1.0, max(0.0, float(v)))


class Forecaster:
    """Base class for every forecaster.

    ``predict_one_step(y_hist, x_hist)`` receives the true targets and the
    covariates observed up to and including the forecast origin (the newest
    row is the origin) and returns the forecast for the following hour.
    ``lookback`` is the number of history rows the model needs.
    Predictions are always clipped to [0, 1].
    """

    kind = "abstract"
    lookback = 1

    def fit(self, train: RegionSeries) -> "Forecaster":
        raise NotImplementedError

    def predict_one_step(self, y_hist: np.ndarray, x_hist: np.ndarray) -> float:
        raise NotImplementedError


class PersistenceForecaster(Forecaster):
    kind = "persistence"
    lookback = 1

    def fit(self, train: RegionSeries) -> "PersistenceForecaster":
        return self

    def predict_one_step(self, y_hist, x_hist) -> float:
        return clip01(y_hist[-1])

    def to_dict(self) -> dict:
        return {}

    @classmethod
    def from_dict(cls, d) -> "PersistenceForecaster":
        return cls()


def fit_persistence(train: RegionSeries) -> PersistenceForecaster:
    return PersistenceForecaster().fit(train)


def rolling_predict_arrays(model: Forecaster, y: np.ndarray, x: np.ndarray, start: int) -> np.ndarray:
    """Forecast ``y[start:]`` one step at a time from strictly earlier rows."""
    need = model.lookback
    if start < need:
        raise InsufficientHistory(f"{model.kind} needs {need} history rows, got {start}")
    out = np.empty(len(y) - start)
    for k, pos in enumerate(range(start, len(y))):
        out[k] = model.predict_one_step(y[pos - need:pos], x[pos - need:pos])
    return out


def _check_contiguous(warm: RegionSeries, test: RegionSeries) -> None:
    if test.t[0] - warm.t[-1] != MINUTES_PER_HOUR:
        raise IrregularCadence("warm history must end exactly one hour before the test window")


def rolling_forecast(model: Forecaster, test: RegionSeries | None,
                     warm_history: RegionSeries) -> np.ndarray:
    """Predictions aligned to ``test``, each using only true values before it."""
    if test is None or len(test) == 0:
        return np.empty(0)
    _check_contiguous(warm_history, test)
    full = concat([warm_history, test])
    return rolling_predict_arrays(model, full.y, full.x, len(warm_history))


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    """Out-of-sample errors ``eps = y - y_hat`` with the origin covariates.

    ``x[i]`` is the covariate row at the forecast origin of ``t[i]``, the
    same vector a corrector sees at prediction time.
    """

    t: np.ndarray
    eps: np.ndarray
    x: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


def residuals(model: Forecaster, series: RegionSeries,
              warm_history: RegionSeries | None = None) -> ResidualSeries:
    """Rolling one-step residuals.

    Without ``warm_history`` the first ``model.lookback`` points of ``series``
    serve as warm-up and get no residual.
    """
    if warm_history is not None:
        _check_contiguous(warm_history, series)
        full = concat([warm_history, series])
        start = len(warm_history)
    else:
        full, start = series, model.lookback
    pred = rolling_predict_arrays(model, full.y, full.x, start)
    return ResidualSeries(full.t[start:].copy(), full.y[start:] - pred, full.x[start - 1:-1].copy())
