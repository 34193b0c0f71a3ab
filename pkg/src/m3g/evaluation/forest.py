"""Bagged CART regression forest."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import EvaluationError
from ..kernels.tree import build_tree, predict_tree


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)


@dataclass
class RandomForest:
    n_trees: int = 100
    max_depth: int | None = 10
    min_leaf: int = 2
    feature_frac: float = 1 / 3
    bootstrap: bool = True
    seed: int = 0
    trees: list[Tree] = field(default_factory=list, repr=False)

    def fit(self, X, y) -> "RandomForest":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] == 0:
            raise EvaluationError("empty training set")
        if self.n_trees < 1 or self.min_leaf < 1 or not 0 < self.feature_frac <= 1:
            raise EvaluationError("invalid forest hyperparameters")
        n, p = X.shape
        n_try = min(p, max(1, math.ceil(self.feature_frac * p)))
        depth = -1 if self.max_depth is None else int(self.max_depth)
        rng = np.random.default_rng(self.seed)
        self.trees = []
        for _ in range(self.n_trees):
            tree_seed = int(rng.integers(0, 2**63 - 1))
            idx = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            self.trees.append(Tree(*build_tree(X, y, idx.astype(np.int64), depth, self.min_leaf, n_try, tree_seed)))
        return self

    def predict(self, X) -> np.ndarray:
        if not self.trees:
            raise EvaluationError("forest is not fitted")
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)


def fit_random_forest(X, y, n_trees: int = 100, max_depth: int | None = 10, min_leaf: int = 2,
                      feature_frac: float = 1 / 3, seed: int = 0, bootstrap: bool = True) -> RandomForest:
    return RandomForest(n_trees, max_depth, min_leaf, feature_frac, bootstrap, seed).fit(X, y)
