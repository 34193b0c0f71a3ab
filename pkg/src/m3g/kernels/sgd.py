"""Sequential per-triplet SGD over pre-sampled index streams.

All three kernels update their parameter arrays in place, write the pre-update
hinge loss of every step into ``losses`` and return the number of steps skipped
at a zero-distance singularity. A return value ``-(t + 1)`` means step ``t``
produced a non-finite value; parameters are left as they were before that step.

Hinge: ``max(0, M + |z - e_c| - |z - e_n|)``. With unit vectors
``u_c = (z - e_c)/|z - e_c|`` and ``u_n = (z - e_n)/|z - e_n|`` the gradients
are ``dz = u_c - u_n``, ``de_c = -u_c``, ``de_n = u_n``.
"""
from __future__ import annotations

import math

import numpy as np

from .._accel import njit, pick


def _edge_loop(Z, anchors, ctx, neg, lr, margin, losses):
    d = Z.shape[1]
    uc = np.empty(d)
    un = np.empty(d)
    skipped = 0
    for t in range(anchors.shape[0]):
        a = anchors[t]
        c = ctx[t]
        n = neg[t]
        dc2 = 0.0
        dn2 = 0.0
        for k in range(d):
            p = Z[a, k] - Z[c, k]
            q = Z[a, k] - Z[n, k]
            dc2 += p * p
            dn2 += q * q
        dc = math.sqrt(dc2)
        dn = math.sqrt(dn2)
        loss = margin + (dc - dn)
        if not math.isfinite(loss):
            return -(t + 1)
        if loss <= 0.0:
            losses[t] = 0.0
            continue
        losses[t] = loss
        if dc == 0.0 or dn == 0.0:
            skipped += 1
            continue
        for k in range(d):
            uc[k] = (Z[a, k] - Z[c, k]) / dc
            un[k] = (Z[a, k] - Z[n, k]) / dn
        for k in range(d):
            Z[a, k] -= lr * (uc[k] - un[k])
            Z[c, k] += lr * uc[k]
            Z[n, k] -= lr * un[k]
    return skipped


def _edge_numpy(Z, anchors, ctx, neg, lr, margin, losses):
    skipped = 0
    for t in range(anchors.shape[0]):
        a, c, n = anchors[t], ctx[t], neg[t]
        vc = Z[a] - Z[c]
        vn = Z[a] - Z[n]
        dc = np.sqrt(vc @ vc)
        dn = np.sqrt(vn @ vn)
        loss = margin + (dc - dn)
        if not np.isfinite(loss):
            return -(t + 1)
        if loss <= 0.0:
            losses[t] = 0.0
            continue
        losses[t] = loss
        if dc == 0.0 or dn == 0.0:
            skipped += 1
            continue
        uc = vc / dc
        un = vn / dn
        Z[a] -= lr * (uc - un)
        Z[c] += lr * uc
        Z[n] -= lr * un
    return skipped


def _word_loop(Z, V, anchors, tc, tn, lr, margin, losses):
    d = Z.shape[1]
    uc = np.empty(d)
    un = np.empty(d)
    skipped = 0
    for t in range(anchors.shape[0]):
        a = anchors[t]
        c = tc[t]
        n = tn[t]
        dc2 = 0.0
        dn2 = 0.0
        for k in range(d):
            p = Z[a, k] - V[c, k]
            q = Z[a, k] - V[n, k]
            dc2 += p * p
            dn2 += q * q
        dc = math.sqrt(dc2)
        dn = math.sqrt(dn2)
        loss = margin + (dc - dn)
        if not math.isfinite(loss):
            return -(t + 1)
        if loss <= 0.0:
            losses[t] = 0.0
            continue
        losses[t] = loss
        if dc == 0.0 or dn == 0.0:
            skipped += 1
            continue
        for k in range(d):
            uc[k] = (Z[a, k] - V[c, k]) / dc
            un[k] = (Z[a, k] - V[n, k]) / dn
        for k in range(d):
            Z[a, k] -= lr * (uc[k] - un[k])
            V[c, k] += lr * uc[k]
            V[n, k] -= lr * un[k]
    return skipped


def _word_numpy(Z, V, anchors, tc, tn, lr, margin, losses):
    skipped = 0
    for t in range(anchors.shape[0]):
        a, c, n = anchors[t], tc[t], tn[t]
        vc = Z[a] - V[c]
        vn = Z[a] - V[n]
        dc = np.sqrt(vc @ vc)
        dn = np.sqrt(vn @ vn)
        loss = margin + (dc - dn)
        if not np.isfinite(loss):
            return -(t + 1)
        if loss <= 0.0:
            losses[t] = 0.0
            continue
        losses[t] = loss
        if dc == 0.0 or dn == 0.0:
            skipped += 1
            continue
        uc = vc / dc
        un = vn / dn
        Z[a] -= lr * (uc - un)
        V[c] += lr * uc
        V[n] -= lr * un
    return skipped


def _feature_loop(Z, W, b, X, anchors, sc, sn, lr, margin, losses):
    d = Z.shape[1]
    f = X.shape[1]
    ec = np.empty(d)
    en = np.empty(d)
    uc = np.empty(d)
    un = np.empty(d)
    skipped = 0
    for t in range(anchors.shape[0]):
        a = anchors[t]
        c = sc[t]
        n = sn[t]
        dc2 = 0.0
        dn2 = 0.0
        for k in range(d):
            acc_c = b[k]
            acc_n = b[k]
            for j in range(f):
                acc_c += W[k, j] * X[c, j]
                acc_n += W[k, j] * X[n, j]
            ec[k] = acc_c
            en[k] = acc_n
            p = Z[a, k] - acc_c
            q = Z[a, k] - acc_n
            dc2 += p * p
            dn2 += q * q
        dc = math.sqrt(dc2)
        dn = math.sqrt(dn2)
        loss = margin + (dc - dn)
        if not math.isfinite(loss):
            return -(t + 1)
        if loss <= 0.0:
            losses[t] = 0.0
            continue
        losses[t] = loss
        if dc == 0.0 or dn == 0.0:
            skipped += 1
            continue
        for k in range(d):
            uc[k] = (Z[a, k] - ec[k]) / dc
            un[k] = (Z[a, k] - en[k]) / dn
        for k in range(d):
            Z[a, k] -= lr * (uc[k] - un[k])
            # de_c = -u_c, de_n = u_n, chained through e = W x + b
            b[k] += lr * (uc[k] - un[k])
            for j in range(f):
                W[k, j] += lr * (uc[k] * X[c, j] - un[k] * X[n, j])
    return skipped


def _feature_numpy(Z, W, b, X, anchors, sc, sn, lr, margin, losses):
    skipped = 0
    for t in range(anchors.shape[0]):
        a, c, n = anchors[t], sc[t], sn[t]
        xc, xn = X[c], X[n]
        vc = Z[a] - (W @ xc + b)
        vn = Z[a] - (W @ xn + b)
        dc = np.sqrt(vc @ vc)
        dn = np.sqrt(vn @ vn)
        loss = margin + (dc - dn)
        if not np.isfinite(loss):
            return -(t + 1)
        if loss <= 0.0:
            losses[t] = 0.0
            continue
        losses[t] = loss
        if dc == 0.0 or dn == 0.0:
            skipped += 1
            continue
        uc = vc / dc
        un = vn / dn
        Z[a] -= lr * (uc - un)
        b += lr * (uc - un)
        W += lr * (np.outer(uc, xc) - np.outer(un, xn))
    return skipped


_edge_numba = njit(_edge_loop)
_word_numba = njit(_word_loop)
_feature_numba = njit(_feature_loop)

edge_epoch = pick(_edge_numba, _edge_numpy)
word_epoch = pick(_word_numba, _word_numpy)
feature_epoch = pick(_feature_numba, _feature_numpy)

IMPLEMENTATIONS = {
    "numpy": {"edge": _edge_numpy, "word": _word_numpy, "feature": _feature_numpy},
}
if _edge_numba is not None:
    IMPLEMENTATIONS["numba"] = {"edge": _edge_numba, "word": _word_numba, "feature": _feature_numba}
