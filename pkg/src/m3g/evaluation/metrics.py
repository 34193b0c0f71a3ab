"""Regression and rank-agreement metrics."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ..errors import EvaluationError
from ..kernels.ranking import pair_counts


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise EvaluationError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size < 2:
        raise EvaluationError("need at least 2 values")
    return y, yhat


def metric_r2(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise EvaluationError("R^2 undefined for constant targets")
    return 1.0 - float(((y - yhat) ** 2).sum()) / ss_tot


def metric_mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.abs(y - yhat).mean())


def metric_kendall_tau(y, yhat) -> float:
    """Tie-corrected Kendall tau-b from full pair enumeration."""
    y, yhat = _pair(y, yhat)
    conc, disc, tx, ty, txy = pair_counts(np.ascontiguousarray(y), np.ascontiguousarray(yhat))
    n0 = y.size * (y.size - 1) // 2
    # tx: tied in y only, ty: tied in yhat only
    untied_y = n0 - tx - txy
    untied_yhat = n0 - ty - txy
    if untied_y == 0:
        raise EvaluationError("Kendall tau undefined for constant targets")
    if untied_yhat == 0:
        return 0.0
    return (conc - disc) / math.sqrt(untied_y * untied_yhat)


def spearman(x, y) -> float:
    x, y = _pair(x, y)
    return float(stats.spearmanr(x, y).statistic)


METRICS = {"r2": metric_r2, "mae": metric_mae, "kendall_tau": metric_kendall_tau}
