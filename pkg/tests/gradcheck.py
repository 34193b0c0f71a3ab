"""Central finite-difference checks for the three triplet families.

Each check returns the worst relative error over all parameter groups for
both the closed-form gradient functions and the SGD kernels (whose update,
divided by ``-lr``, must equal the gradient).
"""
from __future__ import annotations

import numpy as np

from m3g.encoders import EmbeddingTable, FeatureEncoder, WordEncoder
from m3g.trainer import POI, SV, TrainState, apply_batch, feature_triplet_grads, triplet_grads, triplet_loss

EPS = 1e-5
MIN_LOSS = 1e-3  # keep the finite-difference stencil away from the hinge kink


def fd_grad(f, x, eps=EPS):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f()
        x[i] = old - eps
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


def _kernel_grads(state, kind, a, c, n, params, lr=1e-3):
    before = [p.copy() for p in params]
    apply_batch(state, kind, [a], [c], [n], lr)
    grads = [(b - p) / lr for b, p in zip(before, params)]
    for p, b in zip(params, before):
        p[...] = b
    return grads


def check_edge(rng, d=6, n_nodes=5, margin=1.0):
    while True:
        Z = rng.normal(size=(n_nodes, d)) * 0.5
        a, c, n = rng.choice(n_nodes, 3, replace=False)
        if triplet_loss(Z[a], Z[c], Z[n], margin) > MIN_LOSS:
            break

    def f():
        return triplet_loss(Z[a], Z[c], Z[n], margin)

    fd = fd_grad(f, Z)
    g = triplet_grads(Z[a], Z[c], Z[n], margin)
    errs = [rel_err(g.za, fd[a]), rel_err(g.ec, fd[c]), rel_err(g.en, fd[n])]
    state = TrainState(EmbeddingTable([str(i) for i in range(n_nodes)], Z), None, None, margin)
    (gk,) = _kernel_grads(state, "EDGE:DIST", a, c, n, [Z])
    errs.append(rel_err(gk, fd))
    return max(errs)


def check_poi(rng, d=6, vocab=4, margin=1.0):
    while True:
        Z = rng.normal(size=(2, d)) * 0.5
        V = rng.normal(size=(vocab, d)) * 0.5
        tc, tn = rng.choice(vocab, 2, replace=False)
        if triplet_loss(Z[0], V[tc], V[tn], margin) > MIN_LOSS:
            break

    def f():
        return triplet_loss(Z[0], V[tc], V[tn], margin)

    fz, fv = fd_grad(f, Z), fd_grad(f, V)
    g = triplet_grads(Z[0], V[tc], V[tn], margin)
    errs = [rel_err(g.za, fz[0]), rel_err(g.ec, fv[tc]), rel_err(g.en, fv[tn])]
    words = WordEncoder({f"t{i}": i for i in range(vocab)}, V)
    state = TrainState(EmbeddingTable(["a", "b"], Z), None, words, margin)
    gz, gv = _kernel_grads(state, POI, 0, tc, tn, [Z, V])
    errs += [rel_err(gz, fz), rel_err(gv, fv)]
    return max(errs)


def check_sv(rng, d=6, f_dim=4, n_feat=5, margin=1.0):
    while True:
        Z = rng.normal(size=(2, d)) * 0.5
        W = rng.normal(size=(d, f_dim)) * 0.5
        b = rng.normal(size=d) * 0.1
        X = rng.normal(size=(n_feat, f_dim))
        sc, sn = rng.choice(n_feat, 2, replace=False)
        if triplet_loss(Z[0], W @ X[sc] + b, W @ X[sn] + b, margin) > MIN_LOSS:
            break

    def f():
        return triplet_loss(Z[0], W @ X[sc] + b, W @ X[sn] + b, margin)

    fz, fw, fb = fd_grad(f, Z), fd_grad(f, W), fd_grad(f, b)
    gza, gw, gb = feature_triplet_grads(Z[0], W, b, X[sc], X[sn], margin)
    errs = [rel_err(gza, fz[0]), rel_err(gw, fw), rel_err(gb, fb)]
    state = TrainState(EmbeddingTable(["a", "b"], Z), FeatureEncoder(W, b), None, margin, features=X)
    gz, gwk, gbk = _kernel_grads(state, SV, 0, sc, sn, [Z, W, b])
    errs += [rel_err(gz, fz), rel_err(gwk, fw), rel_err(gbk, fb)]
    return max(errs)


CHECKS = {"SV": check_sv, "POI": check_poi, "EDGE": check_edge}
