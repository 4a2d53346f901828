"""K-means over SP columns.

Cluster labels are 1-based so that cluster ``k`` lines up with the traffic
coefficient ``beta[k]`` (``beta[0]`` is the intercept).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .cirsp import SpMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    K: int
    membership: np.ndarray  # a_m in 1..K
    sizes: np.ndarray       # b_k
    centers: np.ndarray     # (I*Q, K)
    inertia: float
    neighbor_ids: tuple[str, ...] = ()
    Q: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)
    n_iter: int = 0

    @property
    def M(self) -> int:
        return int(self.membership.size)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "Q": self.Q,
            "neighbor_ids": list(self.neighbor_ids),
            "membership": self.membership.tolist(),
            "sizes": self.sizes.tolist(),
            "centers": self.centers.tolist(),
            "inertia": self.inertia,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        K = int(d["K"])
        centers = np.array(d["centers"], dtype=float).reshape(-1, K)
        return cls(
            K=K,
            membership=np.array(d["membership"], dtype=np.int64),
            sizes=np.array(d["sizes"], dtype=np.int64),
            centers=centers,
            inertia=float(d["inertia"]),
            neighbor_ids=tuple(d.get("neighbor_ids", ())),
            Q=int(d.get("Q", 0)),
        )


def cluster_centers(membership: np.ndarray, sp: SpMatrix | np.ndarray, K: int | None = None) -> np.ndarray:
    """Per-cluster mean of the SP columns, shape (I*Q, K).

    Entry ``(i*Q + q - 1, k - 1)`` is the share of cluster-k records whose
    CIRSP places neighbor i in interval q.
    """
    data = sp.data if isinstance(sp, SpMatrix) else np.asarray(sp)
    membership = np.asarray(membership)
    if membership.size != data.shape[1]:
        raise ValueError("membership length must equal the number of SP columns")
    K = int(membership.max()) if K is None else K
    onehot = np.zeros((data.shape[1], K))
    onehot[np.arange(membership.size), membership - 1] = 1.0
    sizes = onehot.sum(axis=0)
    if (sizes == 0).any():
        raise ValueError("every cluster needs at least one member")
    return (data.astype(float) @ onehot) / sizes


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (M, K); clipped because the expanded form can dip below zero
    d = (X * X).sum(1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    M = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(M)]
    closest = _sq_dists(X, centers[:1]).ravel()
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(M)
        else:
            idx = rng.choice(M, p=closest / total)
        centers[k] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[k:k + 1]).ravel())
    return centers


def _lloyd(X, K, rng, max_iter, tol):
    centers = _kmeanspp(X, K, rng)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(X, centers)
        new_labels = d.argmin(axis=1)
        # empty-cluster repair: hand the point farthest from its center to the empty cluster
        counts = np.bincount(new_labels, minlength=K)
        for k in np.flatnonzero(counts == 0):
            far = d[np.arange(len(X)), new_labels]
            far[np.bincount(new_labels, minlength=K)[new_labels] <= 1] = -1.0
            m = int(far.argmax())
            new_labels[m] = k
            d[m, k] = 0.0
        for k in range(K):
            centers[k] = X[new_labels == k].mean(axis=0)
        inertia = float(_sq_dists(X, centers)[np.arange(len(X)), new_labels].sum())
        history.append(inertia)
        converged = labels is not None and np.array_equal(new_labels, labels)
        if len(history) > 1:
            prev = history[-2]
            if prev - inertia <= tol * max(prev, 1e-300):
                converged = True
        labels = new_labels
        if converged:
            break
    return labels, history, n_iter


def kmeans(sp: SpMatrix, K: int, seed: int = 0, max_iter: int = 300,
           tol: float = 1e-6, n_init: int = 10) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding; the lowest-inertia of ``n_init`` runs wins."""
    M = sp.M
    if not 1 <= K <= M:
        raise ValueError(f"K must satisfy 1 <= K <= M={M}, got {K}")
    X = sp.data.T.astype(float)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        labels, history, n_iter = _lloyd(X, K, rng, max_iter, tol)
        if best is None or history[-1] < best[1][-1] - 1e-12:
            best = (labels, history, n_iter)
    labels, history, n_iter = best
    membership = labels.astype(np.int64) + 1
    centers = cluster_centers(membership, sp, K)
    inertia = float(((X - centers.T[labels]) ** 2).sum())
    log.debug("kmeans K=%d converged in %d iterations, inertia %.4f", K, n_iter, inertia)
    return ClusterModel(
        K=K,
        membership=membership,
        sizes=np.bincount(labels, minlength=K).astype(np.int64),
        centers=centers,
        inertia=inertia,
        neighbor_ids=sp.neighbor_ids,
        Q=sp.Q,
        history=tuple(history),
        n_iter=n_iter,
    )


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index of two partitions."""
    a = np.unique(np.asarray(labels_a), return_inverse=True)[1]
    b = np.unique(np.asarray(labels_b), return_inverse=True)[1]
    if a.size != b.size:
        raise ValueError("partitions must label the same items")
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    sum_cells = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    expected = sum_a * sum_b / comb(a.size, 2)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
