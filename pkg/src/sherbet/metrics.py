"""Evaluation metrics: weighted F1, recall@k, ROC AUC and binary F1."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllZeroSupport, EmptyTruth, SingleClass


def top_k(scores, k):
    """Column ids of the ``k`` largest scores per row; ties go to the smaller id."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def recall_at_k(scores, truth, k, mask=None):
    """Mean over samples of ``|top_k(scores) & truth| / |truth|``.

    ``truth`` is a binary matrix or a list of id collections. ``mask``
    optionally restricts the ranking to a subset of columns.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    if isinstance(truth, np.ndarray) and truth.ndim == 2:
        sets = [set(np.flatnonzero(row).tolist()) for row in truth]
    else:
        sets = [set(int(c) for c in t) for t in truth]
    tops = top_k(scores, k)
    vals = []
    for row, t in zip(tops, sets):
        if not t:
            raise EmptyTruth("a sample has no true codes")
        vals.append(len(t.intersection(row.tolist())) / len(t))
    # fsum is correctly rounded, so the result does not depend on sample order
    return math.fsum(vals) / len(vals)


def per_class_f1(pred, truth):
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    tp = np.sum(pred & truth, axis=0)
    fp = np.sum(pred & ~truth, axis=0)
    fn = np.sum(~pred & truth, axis=0)
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0), tp + fn


def weighted_f1(pred, truth):
    """Per-class F1 aggregated over the corpus, weighted by class support."""
    pred = np.atleast_2d(pred)
    truth = np.atleast_2d(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    f1, support = per_class_f1(pred, truth)
    total = support.sum()
    if total == 0:
        raise AllZeroSupport("no class has a positive sample")
    return math.fsum((f1 * support).tolist()) / float(total)


def _average_ranks(x):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels):
    """ROC AUC as the Mann-Whitney statistic; tied pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both positive and negative samples")
    r = _average_ranks(scores)
    return float((r[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def binary_f1(scores, labels, threshold=0.5):
    pred = np.asarray(scores, dtype=np.float64).ravel() >= threshold
    labels = np.asarray(labels).astype(bool).ravel()
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


@dataclass
class EvalReport:
    task: str
    n: int
    threshold: float
    values: dict = field(default_factory=dict)

    def to_obj(self):
        out = {"task": self.task}
        out.update(self.values)
        out["n"] = self.n
        out["threshold"] = self.threshold
        return out


def evaluate(task, scores, labels, threshold=0.5, ks=(10, 20), mask=None):
    """Task-appropriate report for prediction ``scores`` against binary ``labels``."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels))
    if task == "diagnosis":
        vals = {"w_f1": weighted_f1(scores >= threshold, labels),
                "r_at": {str(k): recall_at_k(scores, labels, k, mask) for k in ks}}
    else:
        vals = {"auc": auc(scores[:, 0], labels[:, 0]), "f1": binary_f1(scores[:, 0], labels[:, 0], threshold)}
    return EvalReport(task, int(labels.shape[0]), threshold, vals)
