"""The four classifiers, a prior baseline, and versioned JSON persistence."""
from __future__ import annotations

import json

from ..config import ModelsConfig
from ..errors import ModelError
from .base import Classifier, PriorModel, cross_entropy, softmax
from .ensemble import TreeEnsemble, fit_gbdt, fit_rf
from .linear import SoftmaxRegressor, fit_lr
from .mlp import MlpModel, fit_mlp
from .tree import DecisionTree

MODEL_NAMES = ("lr", "mlp", "gbdt", "rf")
FORMAT_VERSION = 1

__all__ = [
    "Classifier", "PriorModel", "SoftmaxRegressor", "MlpModel", "TreeEnsemble", "DecisionTree",
    "softmax", "cross_entropy", "fit_lr", "fit_mlp", "fit_rf", "fit_gbdt", "fit_model",
    "model_to_json", "model_from_json", "save_model", "load_model", "MODEL_NAMES",
]


def fit_model(name: str, X, y, class_weights, cfg: ModelsConfig = ModelsConfig(), seed: int = 0,
              X_val=None, y_val=None) -> Classifier:
    if name == "lr":
        return fit_lr(X, y, class_weights, cfg.lr, seed)
    if name == "mlp":
        return fit_mlp(X, y, class_weights, cfg.mlp, seed, X_val, y_val)
    if name == "gbdt":
        return fit_gbdt(X, y, class_weights, cfg.gbdt, seed)
    if name == "rf":
        return fit_rf(X, y, class_weights, cfg.rf, seed)
    raise ModelError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")


def model_to_json(model: Classifier) -> dict:
    if isinstance(model, SoftmaxRegressor):
        hp, seed = model.params, model.seed
    elif isinstance(model, MlpModel):
        hp, seed = model.hparams, model.seed
    elif isinstance(model, TreeEnsemble):
        hp, seed = model.params, model.seed
    elif isinstance(model, PriorModel):
        hp, seed = {}, 0
    else:
        raise ModelError(f"cannot serialise {type(model).__name__}")
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "hyperparameters": hp,
        "seed": seed,
        "payload": model.payload(),
    }


def model_from_json(d: dict) -> Classifier:
    if d.get("format_version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {d.get('format_version')!r}")
    kind, hp, seed, payload = d["kind"], d["hyperparameters"], d["seed"], d["payload"]
    if kind == "lr":
        return SoftmaxRegressor.from_payload(payload, hp, seed)
    if kind == "mlp":
        return MlpModel.from_payload(payload, hp, seed)
    if kind in ("bagged", "boosted"):
        return TreeEnsemble.from_payload(kind, payload, hp, seed)
    if kind == "prior":
        return PriorModel.from_payload(payload)
    raise ModelError(f"unknown model kind {kind!r}")


def save_model(model: Classifier, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh, sort_keys=True)


def load_model(path) -> Classifier:
    try:
        with open(path) as fh:
            return model_from_json(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ModelError(f"cannot load model {path}: {exc}") from exc
