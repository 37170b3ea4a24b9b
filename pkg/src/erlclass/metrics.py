"""Confusion matrix, macro precision/recall/F1 and AUROC."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyEvaluation, UndefinedAuc
from .features import CLASSES

METRIC_NAMES = ("accuracy", "precision", "recall", "macro_f1", "auroc")


@dataclass
class ConfusionMatrix:
    """Rows are the reference class, columns the prediction."""

    counts: np.ndarray
    classes: tuple = CLASSES

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["reference\\prediction", *self.classes])
            for c, row in zip(self.classes, self.counts):
                w.writerow([c, *(int(v) for v in row)])


def _index(label, classes):
    if isinstance(label, str):
        return classes.index(label)
    return int(label)


def confusion(pairs, classes=CLASSES) -> ConfusionMatrix:
    pairs = list(pairs)
    if not pairs:
        raise EmptyEvaluation("no (true, predicted) pairs to evaluate")
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in pairs:
        cm[_index(t, classes), _index(p, classes)] += 1
    return ConfusionMatrix(cm, tuple(classes))


def confusion_from_arrays(y_true, y_pred, n_classes: int = len(CLASSES)) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0:
        raise EmptyEvaluation("no samples to evaluate")
    cm = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionMatrix(cm, CLASSES[:n_classes])


def accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts) / cm.total)


@dataclass
class ClassScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    degenerate: list = field(default_factory=list)

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))


def precision_recall_f1(cm: ConfusionMatrix) -> ClassScores:
    """One-vs-rest scores per class; any 0/0 is taken as 0 and flagged."""
    c = cm.counts.astype(float)
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    k = len(tp)
    prec, rec, f1 = np.zeros(k), np.zeros(k), np.zeros(k)
    degenerate = []
    for i in range(k):
        if tp[i] + fp[i] > 0:
            prec[i] = tp[i] / (tp[i] + fp[i])
        else:
            degenerate.append((cm.classes[i], "precision"))
        if tp[i] + fn[i] > 0:
            rec[i] = tp[i] / (tp[i] + fn[i])
        else:
            degenerate.append((cm.classes[i], "recall"))
        if prec[i] + rec[i] > 0:
            f1[i] = 2 * prec[i] * rec[i] / (prec[i] + rec[i])
        else:
            degenerate.append((cm.classes[i], "f1"))
    return ClassScores(prec, rec, f1, degenerate)


def binary_auc(scores, positive) -> float:
    """Mann-Whitney statistic; tied (positive, negative) pairs count one half."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAuc("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores, positive):
    """(FPR, TPR) points sweeping the threshold down through distinct scores."""
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], positive[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(p)[last_of_group]
    fp = np.cumsum(~p)[last_of_group]
    tpr = np.r_[0.0, tp / p.sum()]
    fpr = np.r_[0.0, fp / (~p).sum()]
    return fpr, tpr


def trapezoid_auc(scores, positive) -> float:
    fpr, tpr = roc_curve(scores, positive)
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass
class AucResult:
    macro: float
    per_class: dict
    skipped: list


def auroc(scores, truths, mode: str = "ovr") -> AucResult:
    """Macro AUROC over classes (one-vs-rest) or class pairs (one-vs-one).

    Classes without both positives and negatives are skipped and listed.
    """
    scores = np.asarray(scores, dtype=float)
    truths = np.asarray(truths, dtype=np.int64)
    k = scores.shape[1]
    per, skipped = {}, []
    if mode == "ovr":
        for c in range(k):
            pos = truths == c
            if pos.all() or not pos.any():
                skipped.append(CLASSES[c])
                continue
            per[CLASSES[c]] = binary_auc(scores[:, c], pos)
    elif mode == "ovo":
        # Hand & Till: mean over pairs of the two directed AUCs
        for a, b in itertools.combinations(range(k), 2):
            mask = (truths == a) | (truths == b)
            if not ((truths == a).any() and (truths == b).any()):
                skipped.append(f"{CLASSES[a]}-{CLASSES[b]}")
                continue
            ab = binary_auc(scores[mask, a], truths[mask] == a)
            ba = binary_auc(scores[mask, b], truths[mask] == b)
            per[f"{CLASSES[a]}-{CLASSES[b]}"] = (ab + ba) / 2.0
    else:
        raise ValueError(f"unknown AUROC mode {mode!r}")
    if not per:
        raise UndefinedAuc("no class has both positive and negative samples")
    return AucResult(float(np.mean(list(per.values()))), per, skipped)


@dataclass
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    macro_f1: float
    auroc: float
    per_class: dict
    confusion: ConfusionMatrix
    flags: list = field(default_factory=list)

    def values(self) -> dict:
        return {m: getattr(self, m) for m in METRIC_NAMES}

    def to_json(self) -> dict:
        return {
            **self.values(),
            "per_class": self.per_class,
            "confusion": self.confusion.counts.tolist(),
            "classes": list(self.confusion.classes),
            "flags": self.flags,
        }


def evaluate_predictions(y_true, proba, auroc_mode: str = "ovr") -> MetricReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    proba = np.asarray(proba, dtype=float)
    y_pred = np.argmax(proba, axis=1)
    cm = confusion_from_arrays(y_true, y_pred, proba.shape[1])
    sc = precision_recall_f1(cm)
    flags = [f"degenerate {metric} for {cls}" for cls, metric in sc.degenerate]
    try:
        auc = auroc(proba, y_true, auroc_mode)
        auc_value, auc_per = auc.macro, auc.per_class
        flags += [f"auroc skipped {c}" for c in auc.skipped]
    except UndefinedAuc:
        auc_value, auc_per = float("nan"), {}
        flags.append("auroc undefined")
    per_class = {
        c: {"precision": float(sc.precision[i]), "recall": float(sc.recall[i]), "f1": float(sc.f1[i]),
            "auroc": auc_per.get(c)}
        for i, c in enumerate(cm.classes)
    }
    return MetricReport(accuracy(cm), sc.macro_precision, sc.macro_recall, sc.macro_f1, auc_value, per_class, cm, flags)


def evaluate(model, X, y, auroc_mode: str = "ovr") -> MetricReport:
    return evaluate_predictions(y, model.predict_proba(X), auroc_mode)
