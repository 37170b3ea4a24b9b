"""Shared pieces: softmax, weighted cross-entropy, the classifier surface."""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateLabels, DimensionMismatch

N_CLASSES = 3
PROB_FLOOR = 1e-12


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(y, p, weight: float = 1.0) -> float:
    """-weight * sum_j y_j log p_j, with p clamped to [1e-12, 1]."""
    p = np.clip(np.asarray(p, dtype=float), PROB_FLOOR, 1.0)
    return float(-weight * np.sum(np.asarray(y, dtype=float) * np.log(p)))


def one_hot(y, n_classes: int = N_CLASSES) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out


def check_labels(y, n_classes: int = N_CLASSES) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0 or len(np.unique(y)) < 2:
        raise DegenerateLabels("training labels must contain at least two classes")
    if y.min() < 0 or y.max() >= n_classes:
        raise DegenerateLabels(f"labels must lie in [0, {n_classes})")
    return y


def weighted_priors(y, class_weights, n_classes: int = N_CLASSES) -> np.ndarray:
    mass = np.bincount(np.asarray(y, dtype=np.int64), minlength=n_classes) * np.asarray(class_weights, dtype=float)
    return mass / mass.sum()


class Classifier:
    """predict_proba / predict over a fixed-length feature vector."""

    kind = "abstract"
    n_features: int

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. ties go to ER < MR < PM
        return np.argmax(self.predict_proba(X), axis=1)


class PriorModel(Classifier):
    """Predicts the class-weighted training prior for every input."""

    kind = "prior"

    def __init__(self, probs, n_features: int = 0):
        self.probs = np.asarray(probs, dtype=float)
        self.n_features = n_features

    @classmethod
    def fit(cls, y, class_weights, n_features: int = 0) -> "PriorModel":
        return cls(weighted_priors(y, class_weights), n_features)

    def predict_proba(self, X) -> np.ndarray:
        X = self._check(X)
        return np.tile(self.probs, (len(X), 1))

    def payload(self) -> dict:
        return {"probs": self.probs.tolist(), "n_features": self.n_features}

    @classmethod
    def from_payload(cls, d: dict) -> "PriorModel":
        return cls(d["probs"], d["n_features"])
