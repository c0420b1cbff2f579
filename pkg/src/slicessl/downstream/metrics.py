"""Evaluation metrics: ROC-AUC (binary and macro), Dice, regression errors."""

import numpy as np

from ..errors import ShapeError


def _rank_auc(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc: need both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(scores, labels, macro=False):
    """Mann-Whitney AUC; ties count 0.5.

    Binary: 1-D scores for the positive class. Macro: (n, K) scores, the
    unweighted mean of one-vs-rest AUCs over the classes present.
    """
    labels = np.asarray(labels)
    if not macro:
        return _rank_auc(scores, labels)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ShapeError("roc_auc: macro needs (n, K) scores", scores.shape)
    aucs = []
    for c in np.unique(labels):
        aucs.append(_rank_auc(scores[:, int(c)], (labels == c).astype(int)))
    return float(np.mean(aucs))


def dice(pred, truth):
    """2|A n B| / (|A| + |B|); both-empty convention: 1.0."""
    a = np.asarray(pred).astype(bool)
    b = np.asarray(truth).astype(bool)
    if a.shape != b.shape:
        raise ShapeError("dice", a.shape, b.shape)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def mae(pred, target):
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.size == 0 or p.shape != t.shape:
        raise ShapeError("mae", p.shape, t.shape)
    return float(np.abs(p - t).mean())


def rmse(pred, target):
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.size == 0 or p.shape != t.shape:
        raise ShapeError("rmse", p.shape, t.shape)
    return float(np.sqrt(((p - t) ** 2).mean()))


def r2(pred, target):
    """Coefficient of determination against the target-mean baseline."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    ss_res = ((p - t) ** 2).sum()
    ss_tot = ((t - t.mean()) ** 2).sum()
    if ss_tot == 0:
        raise ValueError("r2: zero-variance target")
    return float(1.0 - ss_res / ss_tot)
