"""Pair counts for Kendall's tau by full pair enumeration.

Returns ``(concordant, discordant, ties_x_only, ties_y_only, ties_both)``.
"""
from __future__ import annotations

import numpy as np

from .._accel import njit, pick


def _pair_counts_loop(x, y):
    n = x.shape[0]
    conc = 0
    disc = 0
    tx = 0
    ty = 0
    txy = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0.0 and dy == 0.0:
                txy += 1
            elif dx == 0.0:
                tx += 1
            elif dy == 0.0:
                ty += 1
            elif (dx > 0.0) == (dy > 0.0):
                conc += 1
            else:
                disc += 1
    return conc, disc, tx, ty, txy


def _pair_counts_numpy(x, y, chunk=512):
    n = x.shape[0]
    conc = disc = tx = ty = txy = 0
    for s in range(0, n, chunk):
        i = np.arange(s, min(n, s + chunk))
        sx = np.sign(x[i, None] - x[None, :])
        sy = np.sign(y[i, None] - y[None, :])
        upper = np.arange(n)[None, :] > i[:, None]
        zx = (sx == 0) & upper
        zy = (sy == 0) & upper
        txy += int((zx & zy).sum())
        tx += int((zx & ~zy).sum())
        ty += int((zy & ~zx).sum())
        prod = (sx * sy)[upper]
        conc += int((prod > 0).sum())
        disc += int((prod < 0).sum())
    return conc, disc, tx, ty, txy


_pair_counts_numba = njit(_pair_counts_loop)
pair_counts = pick(_pair_counts_numba, _pair_counts_numpy)

IMPLEMENTATIONS = {"numpy": _pair_counts_numpy}
if _pair_counts_numba is not None:
    IMPLEMENTATIONS["numba"] = _pair_counts_numba
