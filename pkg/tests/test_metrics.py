"""Metric tests: hand counts, oracle equivalence, ordering invariants, k-means."""

import numpy as np
import pytest

from ltc.errors import LengthMismatch, TooFewSamples
from ltc.metrics import clustering_accuracy, kmeans, purity
from conftest import brute_force_accuracy


def test_accuracy_perfect_and_permuted():
    truth = np.array([0, 0, 1, 1, 2, 2])
    assert clustering_accuracy(truth, truth) == 1.0
    permuted = np.array([2, 2, 0, 0, 1, 1])
    assert clustering_accuracy(permuted, truth) == 1.0


def test_accuracy_hand_value():
    truth = np.array([0, 0, 1, 1, 1])
    pred = np.array([1, 1, 1, 0, 0])
    assert clustering_accuracy(pred, truth) == pytest.approx(0.8)


def test_accuracy_rejects_length_mismatch():
    with pytest.raises(LengthMismatch):
        clustering_accuracy(np.array([0, 1]), np.array([0, 1, 2]))


def test_purity_hand_values():
    truth = np.array([0, 0, 1, 1, 1])
    pred = np.array([0, 0, 0, 1, 1])  # clusters {A,A,B} and {B,B}
    assert purity(pred, truth) == pytest.approx(0.8)
    one_cluster = np.zeros(10, dtype=int)
    truth2 = np.array([0] * 6 + [1] * 4)
    assert purity(one_cluster, truth2) == pytest.approx(0.6)
    assert purity(truth, truth) == 1.0


def test_accuracy_equals_brute_force_on_random_instances(rng):
    for _ in range(200):
        n = int(rng.integers(2, 25))
        j = int(rng.integers(1, 7))
        k = int(rng.integers(1, 7))
        pred = rng.integers(0, j, size=n)
        truth = rng.integers(0, k, size=n)
        assert clustering_accuracy(pred, truth) == pytest.approx(
            brute_force_accuracy(pred, truth)
        )


def test_accuracy_never_exceeds_purity(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        pred = rng.integers(0, int(rng.integers(1, 8)), size=n)
        truth = rng.integers(0, int(rng.integers(1, 8)), size=n)
        acc = clustering_accuracy(pred, truth)
        pur = purity(pred, truth)
        assert 0.0 <= acc <= pur <= 1.0


def test_metrics_invariant_to_cluster_renaming(rng):
    pred = rng.integers(0, 4, size=50)
    truth = rng.integers(0, 3, size=50)
    remap = np.array([7, 2, 9, 0])
    assert clustering_accuracy(remap[pred], truth) == clustering_accuracy(pred, truth)
    assert purity(remap[pred], truth) == purity(pred, truth)


def test_purity_one_iff_pure_clusters():
    truth = np.array([0, 0, 1, 1])
    assert purity(np.array([0, 0, 1, 1]), truth) == 1.0
    assert purity(np.array([5, 5, 5, 9]), truth) < 1.0


# --- k-means ----------------------------------------------------------------------

def test_kmeans_separates_two_blobs(rng):
    a = rng.normal(0.0, 0.05, size=(5, 1))
    b = rng.normal(10.0, 0.05, size=(5, 1))
    x = np.vstack([a, b])
    truth = np.array([0] * 5 + [1] * 5)
    labels = kmeans(x, 2, seed=3)
    assert clustering_accuracy(labels, truth) == 1.0


def test_kmeans_k_equals_n_gives_zero_inertia(rng):
    x = rng.standard_normal((6, 2))
    labels = kmeans(x, 6, seed=0)
    assert sorted(labels.tolist()) == list(range(6))


def test_kmeans_is_deterministic(rng):
    x = rng.standard_normal((40, 3))
    a = kmeans(x, 4, seed=9)
    b = kmeans(x, 4, seed=9)
    assert np.array_equal(a, b)


def test_kmeans_too_few_samples(rng):
    with pytest.raises(TooFewSamples):
        kmeans(rng.standard_normal((3, 2)), 5)


def test_kmeans_flattens_3d_input(rng):
    x = rng.standard_normal((12, 4, 2))
    labels = kmeans(x, 3, seed=1)
    assert labels.shape == (12,)
