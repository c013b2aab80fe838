"""Versioned JSON documents for fitted forecasters."""
from __future__ import annotations

import json
import os

from .ar import ArModel
from .base import PersistenceForecaster
from .gbt import GbtModel
from .lstm import LstmModel

MODEL_FORMAT = "qkforecast.model"
MODEL_VERSION = 1
_KINDS = {cls.kind: cls for cls in (PersistenceForecaster, ArModel, GbtModel, LstmModel)}


def model_to_dict(model) -> dict:
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": model.kind,
            "model": model.to_dict()}


def model_from_dict(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a qkforecast model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    try:
        cls = _KINDS[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc["model"])


def save_model(model, path: str | os.PathLike) -> None:
    from ..timeseries import atomic_write_text
    atomic_write_text(path, json.dumps(model_to_dict(model), sort_keys=True))


def load_model(path: str | os.PathLike):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
