"""ReLU multilayer perceptron with a softmax output, trained by mini-batch descent."""
from __future__ import annotations

import numpy as np

from ..config import MlpConfig
from .base import Classifier, N_CLASSES, PROB_FLOOR, check_labels, one_hot, softmax
from .linear import standardizer


def relu(v):
    return np.maximum(0.0, v)


def init_params(sizes, rng: np.random.Generator):
    """He-style uniform initialisation, zero biases."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        params.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return params


def forward(params, X):
    """Returns the list of layer activations; the last entry is the logits."""
    acts = [X]
    h = X
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        h = z if i == len(params) - 1 else relu(z)
        acts.append(h)
    return acts


def loss_and_grad(params, X, Y, w):
    """Mean weighted cross-entropy and its gradient by backpropagation."""
    n = len(X)
    acts = forward(params, X)
    P = softmax(acts[-1])
    loss = -np.sum(w * np.sum(Y * np.log(np.clip(P, PROB_FLOOR, 1.0)), axis=1)) / n
    delta = (P - Y) * w[:, None] / n
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (acts[i] > 0)
    return loss, grads


class MlpModel(Classifier):
    kind = "mlp"

    def __init__(self, params, mean, scale, hparams: dict | None = None, seed: int = 0):
        self.params = [(np.asarray(W, dtype=float), np.asarray(b, dtype=float)) for W, b in params]
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.hparams = hparams or {}
        self.seed = seed
        self.n_features = self.params[0][0].shape[0]
        for (W1, _), (W2, _) in zip(self.params[:-1], self.params[1:]):
            if W1.shape[1] != W2.shape[0]:
                raise ValueError("consecutive layer sizes do not match")

    @property
    def sizes(self):
        return [self.params[0][0].shape[0]] + [W.shape[1] for W, _ in self.params]

    def logits(self, X) -> np.ndarray:
        X = self._check(X)
        return forward(self.params, (X - self.mean) / self.scale)[-1]

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def payload(self) -> dict:
        return {
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.params],
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_payload(cls, d: dict, hparams=None, seed=0) -> "MlpModel":
        return cls([(l["W"], l["b"]) for l in d["layers"]], d["mean"], d["scale"], hparams, seed)


def _macro_f1(y_true, y_pred, k=N_CLASSES):
    f1 = []
    for c in range(k):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        f1.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return float(np.mean(f1))


def fit_mlp(
    X, y, class_weights, cfg: MlpConfig = MlpConfig(), seed: int = 0, X_val=None, y_val=None
) -> MlpModel:
    """Train with shuffled mini-batches (Adam by default, or plain SGD).

    With validation data, training stops once validation Macro-F1 has not
    improved for ``cfg.patience`` epochs and the best epoch's weights are
    returned.
    """
    X = np.asarray(X, dtype=float)
    y = check_labels(y)
    cw = np.asarray(class_weights, dtype=float)
    rng = np.random.default_rng(seed)
    mean, scale = standardizer(X)
    Xs = (X - mean) / scale
    Y = one_hot(y)
    w = cw[y]
    sizes = [X.shape[1], *cfg.hidden, N_CLASSES]
    params = init_params(sizes, rng)
    # Adam moments
    m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    use_val = X_val is not None and y_val is not None and len(y_val) > 0
    if use_val:
        Xv = (np.asarray(X_val, dtype=float) - mean) / scale
        yv = np.asarray(y_val, dtype=np.int64)
    best_f1, best_params, stale = -1.0, params, 0
    n = len(Xs)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            bi = order[start : start + cfg.batch_size]
            _, grads = loss_and_grad(params, Xs[bi], Y[bi], w[bi])
            step += 1
            new = []
            for i, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
                if cfg.optimizer == "sgd":
                    new.append((W - cfg.learning_rate * gW, b - cfg.learning_rate * gb))
                    continue
                mW, mb = m[i]
                vW, vb = v[i]
                mW, mb = beta1 * mW + (1 - beta1) * gW, beta1 * mb + (1 - beta1) * gb
                vW, vb = beta2 * vW + (1 - beta2) * gW**2, beta2 * vb + (1 - beta2) * gb**2
                m[i], v[i] = (mW, mb), (vW, vb)
                lr_t = cfg.learning_rate * np.sqrt(1 - beta2**step) / (1 - beta1**step)
                new.append((W - lr_t * mW / (np.sqrt(vW) + eps), b - lr_t * mb / (np.sqrt(vb) + eps)))
            params = new
        if use_val:
            f1 = _macro_f1(yv, np.argmax(forward(params, Xv)[-1], axis=1))
            if f1 > best_f1:
                best_f1, best_params, stale = f1, params, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if use_val:
        params = best_params
    hparams = {
        "hidden": list(cfg.hidden),
        "learning_rate": cfg.learning_rate,
        "max_epochs": cfg.max_epochs,
        "batch_size": cfg.batch_size,
        "patience": cfg.patience,
        "optimizer": cfg.optimizer,
        "class_weights": cw.tolist(),
        "epochs_run": epoch + 1 if cfg.max_epochs else 0,
    }
    return MlpModel(params, mean, scale, hparams, seed)
