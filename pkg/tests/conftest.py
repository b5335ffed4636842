"""Shared fixtures and independent oracles used across the test suite."""

import itertools

import numpy as np
import pytest


def numeric_grad(f, x, eps=1e-5):
    """Central finite differences of a scalar function at x (oracle)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def rel_err(a, b, floor=1e-6):
    """Max elementwise relative error with an absolute floor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def naive_agglomerative_complete(z, k):
    """Exhaustive complete-linkage agglomeration; oracle for small n.

    Merges the pair of clusters with the smallest maximum inter-point
    distance until k clusters remain; ties break on the lowest index pair.
    Returns labels relabeled by first occurrence.
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    d = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2))
    clusters = [[i] for i in range(n)]
    while len(clusters) > k:
        best = None
        best_dist = np.inf
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                dist = max(d[a, b] for a in clusters[i] for b in clusters[j])
                if dist < best_dist:
                    best_dist = dist
                    best = (i, j)
        i, j = best
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    labels = np.empty(n, dtype=np.int64)
    order = sorted(range(len(clusters)), key=lambda c: min(clusters[c]))
    for new_id, c in enumerate(order):
        for a in clusters[c]:
            labels[a] = new_id
    return labels


def brute_force_accuracy(pred, truth):
    """Best score over every injective cluster-to-class mapping (oracle)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    clusters = np.unique(pred)
    classes = np.unique(truth)
    n_slots = max(len(clusters), len(classes))
    slots = list(range(n_slots))  # classes padded with dummy slots
    best = 0
    for perm in itertools.permutations(slots, len(clusters)):
        score = 0
        for cluster, slot in zip(clusters, perm):
            if slot < len(classes):
                score += int(((pred == cluster) & (truth == classes[slot])).sum())
        best = max(best, score)
    return best / pred.size


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
