"""Path-dependent TreeSHAP, SHAP importance rankings, backward elimination."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import ModelsConfig
from .errors import ExplainerUnsupported, InvalidBatching, UndefinedImportance
from .features import CLASSES, FEATURE_NAMES
from .metrics import METRIC_NAMES, MetricReport, evaluate
from .models import PriorModel, TreeEnsemble, fit_model
from .models.tree import LEAF, DecisionTree


@dataclass
class ShapMatrix:
    values: np.ndarray  # (samples, features, classes)
    base: np.ndarray  # (classes,)
    feature_names: tuple = FEATURE_NAMES

    def output(self) -> np.ndarray:
        """base + sum of attributions: the explained model output per class."""
        return self.base[None, :] + self.values.sum(axis=1)

    def to_csv(self, path, sample_ids=None) -> None:
        n, m, k = self.values.shape
        ids = sample_ids if sample_ids is not None else [str(i) for i in range(n)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "feature", "class", "phi"])
            for i in range(n):
                for j in range(m):
                    for c in range(k):
                        w.writerow([ids[i], self.feature_names[j], CLASSES[c], repr(float(self.values[i, j, c]))])

    def base_json(self) -> dict:
        return {CLASSES[c]: float(v) for c, v in enumerate(self.base)}


# -- TreeSHAP --------------------------------------------------------------
#
# The path is four parallel lists: feature index, zero fraction (cover
# share, scalar), one fraction (per sample, 0/1) and permutation weight
# (per sample). Every sample follows the same recursion; only the one
# fractions differ, so each path slot holds a vector over samples.


def _extend(path, zero, one, feat, n):
    feats, zeros, ones, pw = path
    depth = len(feats)
    feats = feats + [feat]
    zeros = zeros + [zero]
    ones = ones + [one]
    pw = pw + [np.ones(n) if depth == 0 else np.zeros(n)]
    for i in range(depth - 1, -1, -1):
        pw[i + 1] = pw[i + 1] + one * pw[i] * (i + 1) / (depth + 1)
        pw[i] = zero * pw[i] * (depth - i) / (depth + 1)
    return feats, zeros, ones, pw


def _unwind(path, k):
    feats, zeros, ones, pw = path
    depth = len(feats) - 1
    one, zero = ones[k], zeros[k]
    hot = one != 0
    safe_one = np.where(hot, one, 1.0)
    pw = list(pw)
    nxt = pw[depth]
    for i in range(depth - 1, -1, -1):
        a = nxt * (depth + 1) / ((i + 1) * safe_one)
        nxt = np.where(hot, pw[i] - a * zero * (depth - i) / (depth + 1), nxt)
        pw[i] = np.where(hot, a, pw[i] * (depth + 1) / (zero * (depth - i)))
    return (
        feats[:k] + feats[k + 1 :],
        zeros[:k] + zeros[k + 1 :],
        ones[:k] + ones[k + 1 :],
        pw[:depth],
    )


def _unwound_sum(path, k):
    feats, zeros, ones, pw = path
    depth = len(feats) - 1
    one, zero = ones[k], zeros[k]
    hot = one != 0
    safe_one = np.where(hot, one, 1.0)
    nxt = pw[depth]
    total_hot = np.zeros_like(nxt)
    total_cold = np.zeros_like(nxt)
    for i in range(depth - 1, -1, -1):
        tmp = nxt / ((i + 1) * safe_one)
        total_hot = total_hot + tmp
        nxt = pw[i] - tmp * zero * (depth - i)
        total_cold = total_cold + pw[i] / (zero * (depth - i))
    return np.where(hot, total_hot, total_cold) * (depth + 1)


def tree_expected_value(tree: DecisionTree, node: int = 0) -> np.ndarray:
    """Cover-weighted mean output of the subtree at ``node``."""
    if tree.left[node] == LEAF:
        return tree.value[node]
    l, r = tree.left[node], tree.right[node]
    c = tree.cover[node]
    return (tree.cover[l] * tree_expected_value(tree, l) + tree.cover[r] * tree_expected_value(tree, r)) / c


def _check_cover(tree: DecisionTree):
    if tree.cover is None or len(tree.cover) != tree.n_nodes or np.any(~(tree.cover > 0)):
        raise ExplainerUnsupported("TreeSHAP needs a positive cover count on every node")


def tree_shap_single(tree: DecisionTree, X: np.ndarray, n_features: int) -> np.ndarray:
    """SHAP values of one tree for every row of ``X``: shape (n, features, outputs)."""
    _check_cover(tree)
    X = np.asarray(X, dtype=float)
    n = len(X)
    phi = np.zeros((n, n_features, tree.value.shape[1]))

    def recurse(node, path, zero, one, feat):
        path = _extend(path, zero, one, feat, n)
        if tree.left[node] == LEAF:
            feats, zeros, ones, _ = path
            v = tree.value[node]
            for i in range(1, len(feats)):
                w = _unwound_sum(path, i)
                phi[:, feats[i], :] += (w * (ones[i] - zeros[i]))[:, None] * v[None, :]
            return
        d = int(tree.feature[node])
        in_zero, in_one = 1.0, np.ones(n)
        feats = path[0]
        for k in range(1, len(feats)):
            if feats[k] == d:
                in_zero, in_one = path[1][k], path[2][k]
                path = _unwind(path, k)
                break
        l, r = tree.left[node], tree.right[node]
        go_left = X[:, d] <= tree.threshold[node]
        c = tree.cover[node]
        recurse(l, path, in_zero * tree.cover[l] / c, in_one * go_left, d)
        recurse(r, path, in_zero * tree.cover[r] / c, in_one * ~go_left, d)

    recurse(0, ([], [], [], []), 1.0, np.ones(n), -1)
    return phi


def tree_shap(ensemble, X, feature_names=FEATURE_NAMES) -> ShapMatrix:
    """Attributions of the ensemble's additive output.

    bagged: mean class distribution over trees, so phi and base are tree
    means. boosted: logits; each tree adds to its own class.
    """
    if not isinstance(ensemble, TreeEnsemble):
        raise ExplainerUnsupported(f"TreeSHAP does not apply to {type(ensemble).__name__}")
    X = ensemble._check(X)
    n, m, k = len(X), ensemble.n_features, ensemble.n_classes
    values = np.zeros((n, m, k))
    base = np.zeros(k)
    if ensemble.kind == "bagged":
        for t in ensemble.trees:
            values += tree_shap_single(t, X, m)
            base += tree_expected_value(t)
        values /= len(ensemble.trees)
        base /= len(ensemble.trees)
    else:
        base += ensemble.base_score
        for t, c in zip(ensemble.trees, ensemble.tree_class):
            values[:, :, c] += tree_shap_single(t, X, m)[:, :, 0]
            base[c] += tree_expected_value(t)[0]
    names = tuple(feature_names) if len(feature_names) == m else tuple(f"f{i}" for i in range(m))
    return ShapMatrix(values, base, names)


# -- importance ------------------------------------------------------------


@dataclass
class ImportanceRanking:
    names: list
    values: np.ndarray  # aligned with names, descending

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "importance"])
            for i, (f, v) in enumerate(zip(self.names, self.values), start=1):
                w.writerow([i, f, repr(float(v))])


def importance(shap: ShapMatrix, class_filter: str | int | None = None) -> ImportanceRanking:
    vals = np.abs(shap.values)
    if vals.size == 0:
        raise UndefinedImportance("empty SHAP matrix")
    if class_filter is not None:
        c = CLASSES.index(class_filter) if isinstance(class_filter, str) else int(class_filter)
        vals = vals[:, :, c]
    else:
        vals = vals.mean(axis=2)
    per_feature = vals.mean(axis=0)
    total = per_feature.sum()
    if not total > 0:
        raise UndefinedImportance("all SHAP values are zero")
    per_feature = per_feature / total
    order = np.argsort(-per_feature, kind="stable")
    return ImportanceRanking([shap.feature_names[i] for i in order], per_feature[order])


# -- backward elimination --------------------------------------------------


@dataclass
class EliminationStep:
    removed: list
    remaining: list
    report: MetricReport

    @property
    def n_remaining(self) -> int:
        return len(self.remaining)


@dataclass
class EliminationTrace:
    steps: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "n_remaining", *METRIC_NAMES, "removed"])
            for i, s in enumerate(self.steps):
                vals = s.report.values()
                w.writerow([i, s.n_remaining, *(repr(float(vals[m])) for m in METRIC_NAMES), ";".join(s.removed)])

    def find(self, remaining) -> EliminationStep | None:
        want = set(remaining)
        for s in self.steps:
            if set(s.remaining) == want:
                return s
        return None


def default_batches(ranking: ImportanceRanking, floor: float = 0.002) -> list[list[str]]:
    """Least important first: everything under ``floor`` in one batch, then one at a time."""
    asc = list(zip(ranking.names, ranking.values))[::-1]
    low = [f for f, v in asc if v < floor]
    rest = [[f] for f, v in asc if v >= floor]
    return ([low] if low else []) + rest


def validate_batches(batches, feature_names) -> list[list[str]]:
    seen = set()
    for batch in batches:
        for f in batch:
            if f not in feature_names:
                raise InvalidBatching(f"unknown feature {f!r} in batches")
            if f in seen:
                raise InvalidBatching(f"feature {f!r} appears in more than one batch")
            seen.add(f)
    missing = set(feature_names) - seen
    if missing:
        raise InvalidBatching(f"batches do not cover {sorted(missing)}")
    if any(len(b) == 0 for b in batches):
        raise InvalidBatching("empty batch")
    return [list(b) for b in batches]


def backward_eliminate(
    train,
    test,
    batches,
    model: str = "rf",
    class_weights=(0.2, 0.5, 0.3),
    models_cfg: ModelsConfig = ModelsConfig(),
    seed: int = 0,
    val=None,
    auroc_mode: str = "ovr",
) -> EliminationTrace:
    """Refit and score after removing each batch in turn.

    ``train``/``test``/``val`` are labeled FeatureTables. The first step is
    the full feature set; the last, with no features left, is the
    class-weighted prior predictor.
    """
    names = list(train.names)
    batches = validate_batches(batches, names)
    cw = np.asarray(class_weights, dtype=float)
    y_tr, y_te = train.y(), test.y()
    trace = EliminationTrace()
    remaining = list(names)
    for batch in [[]] + batches:
        remaining = [f for f in remaining if f not in batch]
        cols = [names.index(f) for f in remaining]
        if cols:
            kw = {}
            if val is not None and model == "mlp":
                kw = {"X_val": val.X[:, cols], "y_val": val.y()}
            fitted = fit_model(model, train.X[:, cols], y_tr, cw, models_cfg, seed, **kw)
            report = evaluate(fitted, test.X[:, cols], y_te, auroc_mode)
        else:
            prior = PriorModel.fit(y_tr, cw, 0)
            report = evaluate(prior, np.zeros((len(y_te), 0)), y_te, auroc_mode)
        trace.steps.append(EliminationStep(list(batch), list(remaining), report))
    return trace
