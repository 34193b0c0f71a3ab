"""Principal component analysis via the covariance eigendecomposition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EvaluationError


@dataclass
class PCAResult:
    scores: np.ndarray  # N x k
    components: np.ndarray  # d x k, orthonormal columns
    explained_variance: np.ndarray  # k eigenvalues, descending
    explained_variance_ratio: np.ndarray
    mean: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components

    def inverse_transform(self, scores) -> np.ndarray:
        return np.asarray(scores) @ self.components.T + self.mean


def pca_fit_transform(X, k: int) -> PCAResult:
    """Project ``X`` onto its top-``k`` principal axes.

    Covariance uses ``N - 1``. Each component is sign-fixed so its
    largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise EvaluationError("PCA needs a 2-D array with >= 2 rows")
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise EvaluationError(f"k={k} out of range [1, {min(n, d)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order]
    pivot = np.argmax(np.abs(comps), axis=0)
    comps = comps * np.sign(comps[pivot, np.arange(k)])
    total = np.clip(np.linalg.eigvalsh(cov), 0.0, None).sum()
    ratio = evals / total if total > 0 else np.zeros(k)
    return PCAResult(Xc @ comps, comps, evals, ratio, mean)
