"""Classification and clustering metrics."""

from __future__ import annotations

import logging

import numpy as np
from scipy.stats import rankdata

log = logging.getLogger(__name__)

THRESHOLD = 0.5


class UndefinedMetric(ValueError):
    pass


def accuracy(pred_labels, true_labels) -> float:
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise ValueError("prediction and label arrays differ in length")
    if pred_labels.size == 0:
        raise UndefinedMetric("accuracy of an empty set")
    return float(np.mean(pred_labels == true_labels))


def threshold(scores, cut: float = THRESHOLD) -> np.ndarray:
    """Binary decisions: positive iff score >= 0.5."""
    return (np.asarray(scores, dtype=float) >= cut).astype(np.int64)


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetric("both classes must be present")
    return scores, labels, n_pos


def auroc(scores, labels) -> float:
    """Mann-Whitney U statistic over positive/negative pairs, ties count one half."""
    scores, labels, n_pos = _check_binary(scores, labels)
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: sum over distinct thresholds of (R_k - R_{k-1}) * P_k."""
    scores, labels, n_pos = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last position of each run of tied scores
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    precision = tp[last] / (tp[last] + fp[last])
    recall = tp[last] / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def davies_bouldin(points, labels) -> float:
    """Mean over clusters of the worst (s_i + s_j) / d(mu_i, mu_j).

    ``s_i`` is the mean Euclidean distance of cluster members to the centroid.
    Returns ``inf`` (with a warning) if two distinct clusters share a centroid.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    if points.ndim != 2 or points.shape[0] != labels.size:
        raise ValueError("points must be (n, d) with one label per point")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("Davies-Bouldin index needs at least two clusters")
    centroids = np.stack([points[labels == c].mean(axis=0) for c in classes])
    scatter = np.array([np.linalg.norm(points[labels == c] - centroids[k], axis=1).mean()
                        for k, c in enumerate(classes)])
    sep = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=-1)
    off = ~np.eye(classes.size, dtype=bool)
    if np.any(sep[off] == 0):
        log.warning("coincident centroids for distinct clusters; Davies-Bouldin index is infinite")
        return float("inf")
    ratio = np.where(off, (scatter[:, None] + scatter[None, :]) / np.where(off, sep, 1.0), -np.inf)
    return float(np.mean(ratio.max(axis=1)))
