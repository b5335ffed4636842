"""Unsupervised evaluation: optimal-mapping accuracy, purity, and a
raw-space k-means baseline.

Accuracy solves the maximum-weight one-to-one assignment between
predicted clusters and ground-truth classes on the contingency table
(zero-padded square when the counts differ), so any relabeling of the
predictions scores identically. Purity is the fraction of samples that
fall in their cluster's majority class; it upper-bounds accuracy.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch, TooFewSamples


def contingency_table(pred, truth):
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size == 0:
        raise LengthMismatch(f"label vectors {pred.shape} vs {truth.shape}")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    counts = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(counts, (pi, ti), 1)
    return counts


def clustering_accuracy(pred, truth):
    """Best one-to-one cluster-to-class mapping score in [0, 1]."""
    counts = contingency_table(pred, truth)
    j, k = counts.shape
    side = max(j, k)
    square = np.zeros((side, side), dtype=np.int64)
    square[:j, :k] = counts
    rows, cols = linear_sum_assignment(-square)
    return float(square[rows, cols].sum()) / float(counts.sum())


def purity(pred, truth):
    """Per-cluster majority-class fraction in [0, 1]."""
    counts = contingency_table(pred, truth)
    return float(counts.max(axis=1).sum()) / float(counts.sum())


def _sq_dists(x, centers):
    """Chunked exact squared distances (n, k)."""
    n, d = x.shape
    k = centers.shape[0]
    out = np.empty((n, k))
    rows = max(1, (1 << 22) // max(1, k * d))
    for s in range(0, n, rows):
        diff = x[s : s + rows, None, :] - centers[None, :, :]
        out[s : s + rows] = (diff * diff).sum(axis=2)
    return out


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
        else:
            centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(x, centers, max_iter):
    n, k = x.shape[0], centers.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        point_d2 = d2[np.arange(n), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                far = int(point_d2.argmax())
                centers[j] = x[far]
                point_d2[far] = 0.0
    d2 = _sq_dists(x, centers)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, inertia


def kmeans(x, k, seed=0, restarts=10, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` runs.

    Stops when assignments stop changing; deterministic for a given seed.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        x = x.reshape(x.shape[0], -1)
    if x.shape[0] < k:
        raise TooFewSamples(f"{x.shape[0]} samples for k={k}")
    best_labels = None
    best_inertia = np.inf
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        centers = _kmeanspp(x, k, rng)
        labels, inertia = _lloyd(x, centers, max_iter)
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_labels
