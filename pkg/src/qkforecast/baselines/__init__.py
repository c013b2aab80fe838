"""Classical one-step forecasters: persistence, AR(p), boosted trees, LSTM."""
from .ar import ArModel, fit_ar, fit_ar_array
from .base import (
    Forecaster,
    PersistenceForecaster,
    ResidualSeries,
    clip01,
    fit_persistence,
    residuals,
    rolling_forecast,
    rolling_predict_arrays,
)
from .gbt import GbtConfig, GbtModel, fit_gbt, fit_gbt_features, gbt_feature_names, gbt_features
from .io import load_model, model_from_dict, model_to_dict, save_model
from .lstm import LstmConfig, LstmModel, fine_tune_lstm, fit_lstm

__all__ = [
    "ArModel", "Forecaster", "GbtConfig", "GbtModel", "LstmConfig", "LstmModel",
    "PersistenceForecaster", "ResidualSeries", "clip01", "fine_tune_lstm", "fit_ar",
    "fit_ar_array", "fit_gbt", "fit_gbt_features", "fit_lstm", "fit_persistence",
    "gbt_feature_names", "gbt_features", "load_model", "model_from_dict", "model_to_dict",
    "residuals", "rolling_forecast", "rolling_predict_arrays", "save_model",
]
