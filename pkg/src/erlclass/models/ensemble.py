"""Bagged (random forest) and boosted (multiclass GBDT) tree ensembles."""
from __future__ import annotations

import math

import numpy as np

from ..config import GbdtConfig, RfConfig
from .base import Classifier, N_CLASSES, PROB_FLOOR, check_labels, one_hot, softmax, weighted_priors
from .tree import DecisionTree, grow_classification_tree, grow_regression_tree


class TreeEnsemble(Classifier):
    """Trees plus the rule combining them.

    bagged: output is the mean of the trees' class distributions.
    boosted: output is softmax(base_score + sum of trees); tree ``i`` adds
    to class ``tree_class[i]`` and its leaf values already include the
    learning rate.
    """

    def __init__(
        self,
        kind: str,
        trees: list[DecisionTree],
        n_features: int,
        n_classes: int = N_CLASSES,
        base_score=None,
        tree_class=None,
        learning_rate: float = 1.0,
        params: dict | None = None,
        seed: int = 0,
    ):
        if kind not in ("bagged", "boosted"):
            raise ValueError(f"unknown ensemble kind {kind!r}")
        self.kind = kind
        self.trees = trees
        self.n_features = n_features
        self.n_classes = n_classes
        self.base_score = np.zeros(n_classes) if base_score is None else np.asarray(base_score, dtype=float)
        self.tree_class = list(tree_class) if tree_class is not None else None
        self.learning_rate = learning_rate
        self.params = params or {}
        self.seed = seed

    def margin(self, X) -> np.ndarray:
        """Raw additive output: probabilities (bagged) or logits (boosted)."""
        X = self._check(X)
        if self.kind == "bagged":
            out = np.zeros((len(X), self.n_classes))
            for t in self.trees:
                out += t.predict(X)
            return out / len(self.trees)
        out = np.tile(self.base_score, (len(X), 1))
        for t, k in zip(self.trees, self.tree_class):
            out[:, k] += t.predict(X)[:, 0]
        return out

    def predict_proba(self, X) -> np.ndarray:
        out = self.margin(X)
        if self.kind == "bagged":
            return out / out.sum(axis=1, keepdims=True)
        return softmax(out)

    def payload(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "base_score": self.base_score.tolist(),
            "tree_class": self.tree_class,
            "learning_rate": self.learning_rate,
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_payload(cls, kind: str, d: dict, params=None, seed=0) -> "TreeEnsemble":
        return cls(
            kind,
            [DecisionTree.from_json(t) for t in d["trees"]],
            d["n_features"],
            d["n_classes"],
            d["base_score"],
            d["tree_class"],
            d["learning_rate"],
            params,
            seed,
        )


def resolve_max_features(spec, n_features: int) -> int:
    if spec == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if spec in (None, "all"):
        return n_features
    return max(1, min(int(spec), n_features))


def fit_rf(X, y, class_weights, cfg: RfConfig = RfConfig(), seed: int = 0) -> TreeEnsemble:
    """Random forest: bootstrap rows per tree, sqrt(M) candidate features per node.

    Tree ``i`` draws from ``default_rng(seed + i)``, so the forest does not
    depend on the order trees are built in.
    """
    X = np.asarray(X, dtype=float)
    y = check_labels(y)
    cw = np.asarray(class_weights, dtype=float)
    n, m = X.shape
    mf = resolve_max_features(cfg.max_features, m)
    trees = []
    for i in range(cfg.n_trees):
        rng = np.random.default_rng(seed + i)
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)
        rows = np.flatnonzero(counts)
        trees.append(
            grow_classification_tree(
                X[rows],
                y[rows],
                cw[y[rows]] * counts[rows],
                N_CLASSES,
                cfg.max_depth,
                mf,
                rng,
                counts=counts[rows],
                min_samples_leaf=cfg.min_samples_leaf,
            )
        )
    params = {
        "n_trees": cfg.n_trees,
        "max_depth": cfg.max_depth,
        "max_features": cfg.max_features,
        "min_samples_leaf": cfg.min_samples_leaf,
        "class_weights": cw.tolist(),
    }
    return TreeEnsemble("bagged", trees, m, params=params, seed=seed)


def weighted_log_loss(F, Y, w) -> float:
    P = softmax(F)
    return float(-np.sum(w * np.sum(Y * np.log(np.clip(P, PROB_FLOOR, 1.0)), axis=1)) / np.sum(w))


def fit_gbdt(
    X, y, class_weights, cfg: GbdtConfig = GbdtConfig(), seed: int = 0, loss_trace: list | None = None
) -> TreeEnsemble:
    """Multiclass softmax boosting, one regression tree per class per round.

    Each tree fits the negative gradient y_k - p_k of the class-weighted
    softmax loss. ``base_score`` is the log class-weighted prior. The fit
    has no randomness; ``seed`` is recorded for provenance. If ``loss_trace``
    is given, the training loss before each round and after the last is
    appended to it.
    """
    X = np.asarray(X, dtype=float)
    y = check_labels(y)
    cw = np.asarray(class_weights, dtype=float)
    Y = one_hot(y)
    w = cw[y]
    base = np.log(np.clip(weighted_priors(y, cw), PROB_FLOOR, None))
    F = np.tile(base, (len(X), 1))
    trees, tree_class = [], []
    for _ in range(cfg.n_rounds):
        if loss_trace is not None:
            loss_trace.append(weighted_log_loss(F, Y, w))
        P = softmax(F)
        round_trees = []
        for k in range(N_CLASSES):
            t = grow_regression_tree(X, Y[:, k] - P[:, k], w, cfg.max_depth, cfg.l2, cfg.min_samples_leaf)
            t.value = t.value * cfg.learning_rate
            round_trees.append(t)
        for k, t in enumerate(round_trees):
            F[:, k] += t.predict(X)[:, 0]
            trees.append(t)
            tree_class.append(k)
    if loss_trace is not None:
        loss_trace.append(weighted_log_loss(F, Y, w))
    params = {
        "n_rounds": cfg.n_rounds,
        "l2": cfg.l2,
        "learning_rate": cfg.learning_rate,
        "max_depth": cfg.max_depth,
        "min_samples_leaf": cfg.min_samples_leaf,
        "class_weights": cw.tolist(),
    }
    return TreeEnsemble(
        "boosted", trees, X.shape[1], base_score=base, tree_class=tree_class,
        learning_rate=cfg.learning_rate, params=params, seed=seed,
    )
