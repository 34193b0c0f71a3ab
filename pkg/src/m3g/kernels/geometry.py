"""Point-in-polygon location over a flat ring store.

Rings are stored concatenated: polygon ``k`` owns vertices
``vx[offsets[k]:offsets[k + 1]]`` (open ring, closing edge implied).
A point lying exactly on an edge counts as inside; a point inside several
polygons goes to the first one in storage order.
"""
from __future__ import annotations

import numpy as np

from .._accel import njit, pick


def _locate_loop(px, py, vx, vy, offsets, bbox):
    n_pts = px.shape[0]
    n_poly = offsets.shape[0] - 1
    out = np.full(n_pts, -1, dtype=np.int64)
    for i in range(n_pts):
        x = px[i]
        y = py[i]
        for k in range(n_poly):
            if x < bbox[k, 0] or x > bbox[k, 2] or y < bbox[k, 1] or y > bbox[k, 3]:
                continue
            lo = offsets[k]
            hi = offsets[k + 1]
            inside = False
            on_edge = False
            j = hi - 1
            for v in range(lo, hi):
                xi = vx[v]
                yi = vy[v]
                xj = vx[j]
                yj = vy[j]
                cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
                if (
                    cross == 0.0
                    and min(xi, xj) <= x <= max(xi, xj)
                    and min(yi, yj) <= y <= max(yi, yj)
                ):
                    on_edge = True
                    break
                if (yi > y) != (yj > y):
                    if x < (xj - xi) * (y - yi) / (yj - yi) + xi:
                        inside = not inside
                j = v
            if on_edge or inside:
                out[i] = k
                break
    return out


def _locate_numpy(px, py, vx, vy, offsets, bbox):
    n_pts = px.shape[0]
    out = np.full(n_pts, -1, dtype=np.int64)
    for k in range(offsets.shape[0] - 1):
        cand = np.flatnonzero(
            (out < 0)
            & (px >= bbox[k, 0])
            & (px <= bbox[k, 2])
            & (py >= bbox[k, 1])
            & (py <= bbox[k, 3])
        )
        if cand.size == 0:
            continue
        x = px[cand]
        y = py[cand]
        inside = np.zeros(cand.size, dtype=bool)
        on_edge = np.zeros(cand.size, dtype=bool)
        lo, hi = offsets[k], offsets[k + 1]
        j = hi - 1
        for v in range(lo, hi):
            xi, yi, xj, yj = vx[v], vy[v], vx[j], vy[j]
            cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
            on_edge |= (
                (cross == 0.0)
                & (x >= min(xi, xj))
                & (x <= max(xi, xj))
                & (y >= min(yi, yj))
                & (y <= max(yi, yj))
            )
            straddle = (yi > y) != (yj > y)
            if yj != yi:
                xcross = (xj - xi) * (y - yi) / (yj - yi) + xi
                inside ^= straddle & (x < xcross)
            j = v
        hit = inside | on_edge
        out[cand[hit]] = k
    return out


_locate_numba = njit(_locate_loop)
locate_in_polygons = pick(_locate_numba, _locate_numpy)

IMPLEMENTATIONS = {"numpy": _locate_numpy}
if _locate_numba is not None:
    IMPLEMENTATIONS["numba"] = _locate_numba
