"""Multinomial (softmax) logistic regression with class-weighted loss."""
from __future__ import annotations

import numpy as np

from ..config import LrConfig
from .base import Classifier, N_CLASSES, PROB_FLOOR, check_labels, one_hot, softmax, weighted_priors


def standardizer(X) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


class SoftmaxRegressor(Classifier):
    kind = "lr"

    def __init__(self, W, b, mean, scale, params: dict | None = None, seed: int = 0):
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.params = params or {}
        self.seed = seed
        self.n_features = self.W.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = self._check(X)
        return ((X - self.mean) / self.scale) @ self.W.T + self.b

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def payload(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("W", "b", "mean", "scale")}

    @classmethod
    def from_payload(cls, d: dict, params=None, seed=0) -> "SoftmaxRegressor":
        return cls(d["W"], d["b"], d["mean"], d["scale"], params, seed)


def lr_objective(W, b, Xs, Y, w, C: float):
    """Mean class-weighted cross-entropy plus ||W||^2 / (2 C N), and its gradient."""
    n = len(Xs)
    P = softmax(Xs @ W.T + b)
    loss = -np.sum(w * np.sum(Y * np.log(np.clip(P, PROB_FLOOR, 1.0)), axis=1)) / n
    loss += np.sum(W * W) / (2.0 * C * n)
    dz = (P - Y) * w[:, None] / n
    gW = dz.T @ Xs + W / (C * n)
    gb = dz.sum(axis=0)
    return loss, gW, gb


def fit_lr(X, y, class_weights, cfg: LrConfig = LrConfig(), seed: int = 0) -> SoftmaxRegressor:
    """Full-batch gradient descent with Armijo backtracking.

    Stops after ``cfg.max_iter`` iterations or when the gradient norm drops
    below ``cfg.tol``. The intercept starts at the log class-weighted prior.
    The procedure has no randomness; ``seed`` is recorded for provenance.
    """
    X = np.asarray(X, dtype=float)
    y = check_labels(y)
    cw = np.asarray(class_weights, dtype=float)
    mean, scale = standardizer(X)
    Xs = (X - mean) / scale
    Y = one_hot(y)
    w = cw[y]
    W = np.zeros((N_CLASSES, X.shape[1]))
    b = np.log(np.clip(weighted_priors(y, cw), PROB_FLOOR, None))
    loss, gW, gb = lr_objective(W, b, Xs, Y, w, cfg.C)
    step = 1.0
    for _ in range(cfg.max_iter):
        gnorm2 = float(np.sum(gW * gW) + np.sum(gb * gb))
        if np.sqrt(gnorm2) < cfg.tol:
            break
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, new_gW, new_gb = lr_objective(W_new, b_new, Xs, Y, w, cfg.C)
            if new_loss <= loss - 0.5 * step * gnorm2 or step < 1e-12:
                break
            step *= 0.5
        W, b, loss, gW, gb = W_new, b_new, new_loss, new_gW, new_gb
        step = min(step * 2.0, 1e6)
    params = {"max_iter": cfg.max_iter, "C": cfg.C, "tol": cfg.tol, "class_weights": cw.tolist()}
    return SoftmaxRegressor(W, b, mean, scale, params, seed)
