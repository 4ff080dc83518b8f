"""Ranking and classification metrics."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{len(scores)} scores for {len(labels)} labels")
    return scores, labels.astype(bool)


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(positive outranks negative), ties count one half."""
    scores, labels = _binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative samples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Step-wise area under precision-recall, sweeping thresholds from high to low.

    Tied scores enter together, so a tie block contributes one point.
    """
    scores, labels = _binary(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUPR needs at least one positive sample")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    block_end = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[block_end]
    seen = block_end + 1
    precision = tp / seen
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions).ravel()
    labels = np.asarray(labels).ravel()
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    if len(labels) == 0:
        raise ValueError("accuracy of an empty set")
    return float(np.mean(predictions == labels))
