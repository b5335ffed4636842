"""Clustering head: centroids, Student's-t soft assignments, the sharpened
self-training target, the KL objective and its closed-form gradients.

With kernel k_ij = (1 + ||z_i - mu_j||^2 / alpha)^(-(alpha+1)/2):

    q_ij = k_ij / sum_j' k_ij'
    f_j  = sum_i q_ij
    p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j')
    L    = sum_ij p_ij log(p_ij / q_ij)

and, holding P fixed,

    dL/dz_i  =  (alpha+1)/alpha sum_j (1 + d_ij^2/alpha)^-1 (p_ij - q_ij)(z_i - mu_j)
    dL/dmu_j = -(alpha+1)/alpha sum_i (1 + d_ij^2/alpha)^-1 (p_ij - q_ij)(z_i - mu_j)
"""

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage

from .errors import (
    DegenerateCentroids,
    DegenerateColumn,
    DimensionMismatch,
    DomainError,
    TooFewSamples,
)

_CHUNK = 1 << 22  # max elements of the (n, k, d) difference tensor per slab


@dataclass
class TcState:
    """Cluster centroids plus the stored training-time confidence p_c."""

    centroids: np.ndarray
    alpha: float = 1.0
    p_c: float = 0.0

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise DimensionMismatch(f"centroids must be (k, d), got {self.centroids.shape}")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if not np.isfinite(self.centroids).all():
            raise DegenerateCentroids("non-finite centroid")

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]


def hierarchical_clusters(z, k, method="complete"):
    """Agglomerative labels (Euclidean, complete linkage) cut at k clusters.

    Cluster ids are relabeled by first occurrence so the output is
    deterministic for a given input ordering.
    """
    n = z.shape[0]
    if n < k:
        raise TooFewSamples(f"{n} samples for {k} clusters")
    if k == n:
        raw = np.arange(n)
    elif k == 1:
        raw = np.zeros(n, dtype=np.int64)
    else:
        tree = linkage(z, method=method, metric="euclidean")
        raw = cut_tree(tree, n_clusters=k).ravel()
    remap: dict[int, int] = {}
    labels = np.empty(n, dtype=np.int64)
    for i, r in enumerate(raw):
        labels[i] = remap.setdefault(int(r), len(remap))
    return labels


def init_centroids(z, k, method="complete"):
    """Hierarchical-clustering centroids: per-cluster arithmetic means."""
    z = np.asarray(z, dtype=np.float64)
    labels = hierarchical_clusters(z, k, method=method)
    centroids = np.empty((k, z.shape[1]))
    for j in range(k):
        centroids[j] = z[labels == j].mean(axis=0)
    if k > 1:
        diff = centroids[:, None, :] - centroids[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        dist[np.diag_indices(k)] = np.inf
        if dist.min() <= 1e-12:
            raise DegenerateCentroids("initial centroids are not pairwise distinct")
    return centroids, labels


def _sq_distances(z, centroids):
    """Exact squared Euclidean distances (n, k), chunked over rows."""
    n, d = z.shape
    k = centroids.shape[0]
    out = np.empty((n, k))
    rows = max(1, _CHUNK // max(1, k * d))
    for start in range(0, n, rows):
        diff = z[start : start + rows, None, :] - centroids[None, :, :]
        out[start : start + rows] = (diff * diff).sum(axis=2)
    return out


def soft_assign(z, state):
    """Row-stochastic Q of Student's-t kernel similarities to the centroids."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != state.dim:
        raise DimensionMismatch(f"Z is {z.shape}, centroids are {state.centroids.shape}")
    a = state.alpha
    kern = (1.0 + _sq_distances(z, state.centroids) / a) ** (-(a + 1.0) / 2.0)
    return kern / kern.sum(axis=1, keepdims=True)


def target_distribution(q):
    """Sharpened, frequency-normalized target P and soft frequencies f."""
    f = q.sum(axis=0)
    if np.any(f <= 0.0):
        raise DegenerateColumn("empty soft cluster frequency")
    w = (q * q) / f
    return w / w.sum(axis=1, keepdims=True), f


def kld_loss(p, q):
    """KL divergence sum_ij p log(p/q), natural log."""
    if p.shape != q.shape:
        raise DimensionMismatch(f"{p.shape} vs {q.shape}")
    if np.any(p <= 0.0) or np.any(q <= 0.0):
        raise DomainError("KL divergence needs strictly positive entries")
    return float(np.sum(p * (np.log(p) - np.log(q))))


def _pair_weights(z, state, p, q):
    a = state.alpha
    w = (p - q) / (1.0 + _sq_distances(z, state.centroids) / a)
    return (a + 1.0) / a, w


def grad_z(z, state, p, q):
    """Gradient of the KL objective in each latent row, target held fixed."""
    z = np.asarray(z, dtype=np.float64)
    if p.shape != q.shape or p.shape != (z.shape[0], state.k):
        raise DimensionMismatch("P/Q shapes do not match Z and the centroids")
    scale, w = _pair_weights(z, state, p, q)
    return scale * (z * w.sum(axis=1, keepdims=True) - w @ state.centroids)


def grad_mu(z, state, p, q):
    """Gradient of the KL objective in each centroid, target held fixed."""
    z = np.asarray(z, dtype=np.float64)
    if p.shape != q.shape or p.shape != (z.shape[0], state.k):
        raise DimensionMismatch("P/Q shapes do not match Z and the centroids")
    scale, w = _pair_weights(z, state, p, q)
    return -scale * (w.T @ z - state.centroids * w.sum(axis=0)[:, None])


def confidence(p):
    """Mean over samples of the strongest target assignment, in (0, 1]."""
    return float(p.max(axis=1).mean())
