"""Array-backed decision trees and the greedy split search shared by RF and GBDT."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class DecisionTree:
    """Binary tree in flat arrays; node 0 is the root.

    Samples with ``x[feature] <= threshold`` go left. ``value`` holds the
    node output (class distribution or regression value), ``cover`` the
    number of training samples that reached the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] == LEAF

    @property
    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for n in range(self.n_nodes):
            if self.left[n] != LEAF:
                depth[self.left[n]] = depth[self.right[n]] = depth[n] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.left[node] != LEAF
        while active.any():
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = self.left[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DecisionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float).reshape(len(d["feature"]), -1),
            np.asarray(d["cover"], dtype=float),
        )

    def check_cover(self) -> bool:
        internal = self.left != LEAF
        return bool(
            np.all(self.cover[internal] == self.cover[self.left[internal]] + self.cover[self.right[internal]])
        )


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value, self.cover = [], [], [], [], [], []

    def add(self, value, cover) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.cover.append(cover)
        return len(self.feature) - 1

    def tree(self) -> DecisionTree:
        return DecisionTree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=float),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=float).reshape(len(self.value), -1),
            np.asarray(self.cover, dtype=float),
        )


def _best_split(Xn, stats, counts, feats, score_fn, min_leaf):
    """Best threshold over ``feats`` for one node.

    ``stats`` (n, s) are additive per-sample statistics, ``counts`` the
    per-sample cover multiplicities. Returns (score, feature, threshold) or
    None when no feature admits a split.
    """
    cols = Xn[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    vals = np.take_along_axis(cols, order, axis=0)
    cum = np.cumsum(stats[order], axis=0)[:-1]  # (n-1, f, s): left sums after position p
    total = stats.sum(axis=0)
    cnt = np.cumsum(counts[order], axis=0)[:-1]
    valid = (vals[:-1] < vals[1:]) & (cnt >= min_leaf) & (counts.sum() - cnt >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score_fn(cum, total - cum), -np.inf)
    # first maximum in (feature, position) order keeps ties deterministic
    flat = np.argmax(score.T)
    fi, p = divmod(int(flat), score.shape[0])
    lo, hi = vals[p, fi], vals[p + 1, fi]
    thr = (lo + hi) / 2.0
    if not thr < hi:
        thr = lo
    return float(score[p, fi]), int(feats[fi]), float(thr)


def _gini_score(left, right):
    # sum_k c_k^2 / W on each side; larger means lower weighted impurity
    wl = left.sum(axis=-1)
    wr = right.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (left**2).sum(axis=-1) / wl + (right**2).sum(axis=-1) / wr


def weighted_gini(class_weight_sums) -> float:
    c = np.asarray(class_weight_sums, dtype=float)
    tot = c.sum()
    if tot <= 0:
        return 0.0
    return float(1.0 - np.sum((c / tot) ** 2))


def grow_classification_tree(
    X: np.ndarray,
    y: np.ndarray,
    weight: np.ndarray,
    n_classes: int,
    max_depth: int,
    max_features: int,
    rng: np.random.Generator,
    counts: np.ndarray | None = None,
    min_samples_leaf: int = 1,
) -> DecisionTree:
    """CART with weighted Gini impurity and per-node feature subsampling.

    ``weight`` is the per-sample weight (class weight times bootstrap
    multiplicity); ``counts`` the bootstrap multiplicities used as cover.
    Leaves store the weighted class distribution. If none of the first
    ``max_features`` sampled features can split, further features are
    tried one at a time.
    """
    n, m = X.shape
    counts = np.ones(n) if counts is None else np.asarray(counts, dtype=float)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    stats = onehot * weight[:, None]
    b = _Builder()

    def node_value(idx):
        c = stats[idx].sum(axis=0)
        return c / c.sum() if c.sum() > 0 else np.full(n_classes, 1.0 / n_classes)

    def grow(idx, depth):
        c = stats[idx].sum(axis=0)
        node = b.add(node_value(idx), float(counts[idx].sum()))
        if depth >= max_depth or weighted_gini(c) <= 0.0 or counts[idx].sum() < 2:
            return node
        Xn = X[idx]
        perm = rng.permutation(m)
        best = _best_split(Xn, stats[idx], counts[idx], perm[:max_features], _gini_score, min_samples_leaf)
        k = max_features
        while best is None and k < m:
            best = _best_split(Xn, stats[idx], counts[idx], perm[k : k + 1], _gini_score, min_samples_leaf)
            k += 1
        if best is None:
            return node
        _, f, thr = best
        go_left = Xn[:, f] <= thr
        b.feature[node], b.threshold[node] = f, thr
        b.left[node] = grow(idx[go_left], depth + 1)
        b.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    return b.tree()


def grow_regression_tree(
    X: np.ndarray,
    target: np.ndarray,
    weight: np.ndarray,
    max_depth: int,
    l2: float = 0.0,
    min_samples_leaf: int = 1,
) -> DecisionTree:
    """Least-squares tree with an L2 penalty on leaf values.

    Leaf value is sum(w*r) / (sum(w) + l2); a split is kept only if it
    raises sum G^2/(W + l2) over the two children.
    """
    n, m = X.shape
    stats = np.stack([weight * target, weight], axis=1)
    counts = np.ones(n)
    feats = np.arange(m)
    b = _Builder()

    def score_fn(left, right):
        return left[..., 0] ** 2 / (left[..., 1] + l2) + right[..., 0] ** 2 / (right[..., 1] + l2)

    def grow(idx, depth):
        g, w = stats[idx].sum(axis=0)
        denom = w + l2
        node = b.add([g / denom if denom > 0 else 0.0], float(len(idx)))
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf or len(idx) < 2:
            return node
        best = _best_split(X[idx], stats[idx], counts[idx], feats, score_fn, min_samples_leaf)
        if best is None or not best[0] > (g * g / denom if denom > 0 else 0.0):
            return node
        _, f, thr = best
        go_left = X[idx, f] <= thr
        b.feature[node], b.threshold[node] = f, thr
        b.left[node] = grow(idx[go_left], depth + 1)
        b.right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    return b.tree()
