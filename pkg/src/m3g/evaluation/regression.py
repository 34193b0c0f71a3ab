"""Ridge-regularised least squares via the normal equations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EvaluationError

DEFAULT_RIDGE = 1e-6


@dataclass
class LinearModel:
    coef: np.ndarray
    intercept: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coef + self.intercept


def fit_linear(X, y, ridge: float = DEFAULT_RIDGE) -> LinearModel:
    """Minimise ``|y - Xw - b|^2 + ridge * |w|^2`` (intercept unpenalised)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2 or X.shape[0] != y.size:
        raise EvaluationError("need >= 2 rows and matching targets")
    if ridge < 0:
        raise EvaluationError("ridge must be >= 0")
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    A = Xc.T @ Xc + ridge * np.eye(X.shape[1])
    rhs = Xc.T @ (y - ym)
    if ridge == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise EvaluationError("singular normal equations; use ridge > 0")
    try:
        w = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise EvaluationError("singular normal equations; use ridge > 0") from None
    return LinearModel(w, float(ym - xm @ w))
