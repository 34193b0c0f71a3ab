"""Time every kernel under both backends and check that their outputs agree.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

The numba column excludes JIT compilation (one warm-up call is made first).
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from m3g.kernels import geometry, ranking, sgd, tree


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _polygons(rng, n_poly=200, n_pts=100_000):
    cx, cy = rng.uniform(0, 100, n_poly), rng.uniform(0, 100, n_poly)
    vx, vy, offsets = [], [], [0]
    for x, y in zip(cx, cy):
        k = int(rng.integers(3, 9))
        ang = np.sort(rng.uniform(0, 2 * np.pi, k))
        r = rng.uniform(1, 4, k)
        vx.append(x + r * np.cos(ang))
        vy.append(y + r * np.sin(ang))
        offsets.append(offsets[-1] + k)
    vx, vy, offsets = np.concatenate(vx), np.concatenate(vy), np.array(offsets, dtype=np.int64)
    bbox = np.array([[vx[a:b].min(), vy[a:b].min(), vx[a:b].max(), vy[a:b].max()]
                     for a, b in zip(offsets[:-1], offsets[1:])])
    return rng.uniform(0, 100, n_pts), rng.uniform(0, 100, n_pts), vx, vy, offsets, bbox


def cases(rng):
    """``name -> (call(impls), compare(out_a, out_b))``; every call builds fresh inputs."""
    poly = _polygons(rng)
    x = rng.integers(0, 50, 3000).astype(float)
    y = x + rng.integers(0, 30, 3000)
    n, d, steps = 500, 200, 20_000
    Z0 = rng.uniform(-0.1, 0.1, (n, d))
    V0 = rng.uniform(-0.1, 0.1, (120, d))
    W0 = rng.uniform(-0.02, 0.02, (d, 32))
    X = rng.normal(size=(5000, 32))
    a = rng.integers(0, n, steps)
    c = rng.integers(0, n, steps)
    g = rng.integers(0, n, steps)
    tc, tn = rng.integers(0, 120, steps), rng.integers(0, 120, steps)
    sc, sn = rng.integers(0, 5000, steps), rng.integers(0, 5000, steps)
    Xt = rng.normal(size=(2000, 50))
    yt = Xt[:, 0] + np.sin(Xt[:, 1]) + 0.1 * rng.normal(size=2000)
    idx = rng.integers(0, 2000, 2000).astype(np.int64)

    def edge(impls):
        Z, losses = Z0.copy(), np.empty(steps)
        impls["edge"](Z, a, c, g, 0.05, 1.0, losses)
        return Z

    def word(impls):
        Z, V, losses = Z0.copy(), V0.copy(), np.empty(steps)
        impls["word"](Z, V, a, tc, tn, 0.01, 1.0, losses)
        return Z, V

    def feature(impls):
        Z, W, b, losses = Z0.copy(), W0.copy(), np.zeros(d), np.empty(steps)
        impls["feature"](Z, W, b, X, a, sc, sn, 0.01, 1.0, losses)
        return Z, W, b

    def close(p, q):
        p, q = (p,) if isinstance(p, np.ndarray) else p, (q,) if isinstance(q, np.ndarray) else q
        return all(np.allclose(u, v, rtol=1e-9, atol=1e-12) for u, v in zip(p, q))

    def equal(p, q):
        return all(np.array_equal(u, v) for u, v in zip(p, q)) if isinstance(p, tuple) else np.array_equal(p, q)

    return {
        "locate_in_polygons": (lambda m: m(*poly), geometry.IMPLEMENTATIONS, equal),
        "pair_counts": (lambda m: m(x, y), ranking.IMPLEMENTATIONS, equal),
        "edge_epoch": (edge, sgd.IMPLEMENTATIONS, close),
        "word_epoch": (word, sgd.IMPLEMENTATIONS, close),
        "feature_epoch": (feature, sgd.IMPLEMENTATIONS, close),
        "build_tree": (lambda m: m["build"](Xt, yt, idx, 10, 2, 17, 12345), tree.IMPLEMENTATIONS, equal),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    rows = []
    for name, (call, registry, same) in cases(np.random.default_rng(args.seed)).items():
        impls = {"numpy": registry["numpy"], "numba": registry.get("numba")}
        row = {"kernel": name}
        outs = {}
        for backend, impl in impls.items():
            if impl is None:
                row[backend] = None
                continue
            outs[backend] = call(impl)  # warm-up; also JIT for numba
            row[backend] = _time(lambda: call(impl), args.repeat)
        row["speedup"] = row["numpy"] / row["numba"] if row.get("numba") else None
        row["agree"] = same(outs["numpy"], outs["numba"]) if "numba" in outs else None
        rows.append(row)

    print(f"{'kernel':<20}{'numpy s':>12}{'numba s':>12}{'speedup':>10}  agree")
    for r in rows:
        nb = f"{r['numba']:12.4f}" if r["numba"] is not None else f"{'n/a':>12}"
        sp = f"{r['speedup']:10.1f}" if r["speedup"] is not None else f"{'n/a':>10}"
        print(f"{r['kernel']:<20}{r['numpy']:12.4f}{nb}{sp}  {r['agree']}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return rows


if __name__ == "__main__":
    main()
