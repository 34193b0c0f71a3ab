"""CART regression tree growth and prediction on flat node arrays.

Nodes are grown depth-first (left child first) from an explicit stack, so the
numba and numpy builders visit nodes in the same order and draw the same
per-node feature subsets from a splitmix64 stream seeded per tree. Splits
maximise ``S_L^2/n_L + S_R^2/n_R`` (the variance-reduction criterion) over
midpoints between distinct sorted values; samples go left when
``x <= threshold``. Leaves hold the mean target.

``max_depth < 0`` means unlimited depth.
"""
from __future__ import annotations

import numpy as np

from .._accel import njit, pick

_MASK = (1 << 64) - 1


def _splitmix_py(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _splitmix_nb(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return state, z ^ (z >> np.uint64(31))


def _midpoint(a, b):
    m = 0.5 * (a + b)
    if m >= b:  # a and b adjacent floats
        m = a
    return m


def _build_loop(X, y, idx, max_depth, min_leaf, n_try, seed):
    n = idx.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    work = idx.copy()
    tmp = np.empty(n, dtype=np.int64)
    xs = np.empty(n)
    perm = np.empty(p, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 1
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    n_nodes = 1
    state = np.uint64(seed)
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]
        depth = st_depth[sp]
        m = hi - lo
        s = 0.0
        y0 = y[work[lo]]
        pure = True
        for k in range(lo, hi):
            yk = y[work[k]]
            s += yk
            if yk != y0:
                pure = False
        value[node] = s / m
        if pure or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        for i in range(p):
            perm[i] = i
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        for t in range(n_try):
            state, r = _splitmix_jit(state)
            j = t + np.int64(r % np.uint64(p - t))
            tmpf = perm[t]
            perm[t] = perm[j]
            perm[j] = tmpf
            f = perm[t]
            for k in range(m):
                xs[k] = X[work[lo + k], f]
            order = np.argsort(xs[:m], kind="mergesort")
            sl = 0.0
            for k in range(m - 1):
                sl += y[work[lo + order[k]]]
                nl = k + 1
                nr = m - nl
                if nr < min_leaf:
                    break
                if nl < min_leaf:
                    continue
                a = xs[order[k]]
                b = xs[order[k + 1]]
                if a == b:
                    continue
                sr = s - sl
                score = sl * sl / nl + sr * sr / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_thr = _midpoint_jit(a, b)
        if best_f < 0:
            continue
        nl = 0
        for k in range(lo, hi):
            if X[work[k], best_f] <= best_thr:
                tmp[nl] = work[k]
                nl += 1
        nr = 0
        for k in range(lo, hi):
            if X[work[k], best_f] > best_thr:
                tmp[nl + nr] = work[k]
                nr += 1
        for k in range(m):
            work[lo + k] = tmp[k]
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left subtree is grown first
        st_node[sp] = n_nodes + 1
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = n_nodes
        st_lo[sp] = lo
        st_hi[sp] = lo + nl
        st_depth[sp] = depth + 1
        sp += 1
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def _build_numpy(X, y, idx, max_depth, min_leaf, n_try, seed):
    n = idx.shape[0]
    p = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    state = int(seed) & _MASK
    work = np.array(idx, dtype=np.int64)
    stack = [(new_node(), 0, n, 0)]
    while stack:
        node, lo, hi, depth = stack.pop()
        rows = work[lo:hi]
        m = hi - lo
        yn = y[rows]
        s = np.cumsum(yn)[-1]
        value[node] = s / m
        pure = bool(np.all(yn == yn[0]))
        if pure or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        perm = list(range(p))
        best_score, best_f, best_thr = -np.inf, -1, 0.0
        nl_all = np.arange(1, m)
        valid_n = (m - nl_all >= min_leaf) & (nl_all >= min_leaf)
        for t in range(n_try):
            state, r = _splitmix_py(state)
            j = t + r % (p - t)
            perm[t], perm[j] = perm[j], perm[t]
            f = perm[t]
            xs = X[rows, f]
            order = np.argsort(xs, kind="stable")
            xo = xs[order]
            sl = np.cumsum(yn[order])[:-1]
            sr = s - sl
            ok = valid_n & (xo[:-1] != xo[1:])
            if not ok.any():
                continue
            score = np.where(ok, sl * sl / nl_all + sr * sr / (m - nl_all), -np.inf)
            k = int(np.argmax(score))
            if score[k] > best_score:
                best_score, best_f = score[k], f
                best_thr = _midpoint(xo[k], xo[k + 1])
        if best_f < 0:
            continue
        go_left = X[rows, best_f] <= best_thr
        work[lo:hi] = np.concatenate([rows[go_left], rows[~go_left]])
        nl = int(go_left.sum())
        li, ri = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = best_f, best_thr, li, ri
        stack.append((ri, lo + nl, hi, depth + 1))
        stack.append((li, lo, lo + nl, depth + 1))
    return (
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


def _predict_loop(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _predict_numpy(X, feature, threshold, left, right, value):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nd = node[rows]
        go_left = X[rows, feature[nd]] <= threshold[nd]
        node[rows] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node]


_splitmix_jit = njit(_splitmix_nb)
_midpoint_jit = njit(_midpoint)
_build_core = njit(_build_loop)
_predict_numba = njit(_predict_loop)


def _build_numba(X, y, idx, max_depth, min_leaf, n_try, seed):
    return _build_core(X, y, idx, max_depth, min_leaf, n_try, np.uint64(seed))


if _build_core is None:  # pragma: no cover
    _build_numba = None

build_tree = pick(_build_numba, _build_numpy)
predict_tree = pick(_predict_numba, _predict_numpy)

IMPLEMENTATIONS = {"numpy": {"build": _build_numpy, "predict": _predict_numpy}}
if _build_numba is not None:
    IMPLEMENTATIONS["numba"] = {"build": _build_numba, "predict": _predict_numba}
