"""k-means with k-means++ seeding and Lloyd iterations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EvaluationError


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: list[float] = field(default_factory=list)


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plus_plus(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    closest = ((X - X[centers[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a centre; take unused rows in order
            nxt = next(i for i in range(n) if i not in centers)
        else:
            nxt = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        centers.append(nxt)
        closest = np.minimum(closest, ((X - X[nxt]) ** 2).sum(1))
    return X[centers].copy()


def kmeans(X, k: int, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Cluster rows of ``X``; stops when assignments stop changing.

    ``history`` holds the inertia after every assignment step. An emptied
    cluster is re-seeded at the point farthest from its current centroid.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise EvaluationError(f"k={k} must be in [1, N={n}]" if k < 1 else f"k={k} exceeds the number of points N={n}")
    rng = np.random.default_rng(seed)
    C = _plus_plus(X, k, rng)
    labels = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, C)
        new = np.argmin(d, axis=1)
        for j in range(k):
            if not np.any(new == j):
                cost = d[np.arange(n), new]
                sizes = np.bincount(new, minlength=k)
                cost[sizes[new] < 2] = -1.0
                far = int(np.argmax(cost))
                C[j] = X[far]
                new[far] = j
                d[:, j] = ((X - C[j]) ** 2).sum(1)
        inertia = float(((X - C[new]) ** 2).sum())
        history.append(inertia)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            C[j] = X[labels == j].mean(axis=0)
    inertia = float(((X - C[labels]) ** 2).sum())
    return KMeansResult(labels, C, inertia, it, history)
