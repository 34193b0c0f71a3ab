"""The numba kernels and their numpy fallbacks must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from m3g import _accel
from m3g.kernels import geometry, ranking, sgd, tree

needs_numba = pytest.mark.skipif("numba" not in sgd.IMPLEMENTATIONS, reason="numba not installed")


def both(registry):
    return registry["numpy"], registry["numba"]


@needs_numba
def test_locate_parity(rng):
    n_poly = 30
    vx, vy, offsets = [], [], [0]
    for _ in range(n_poly):
        k = int(rng.integers(3, 8))
        ang = np.sort(rng.uniform(0, 2 * np.pi, k))
        r = rng.uniform(0.5, 3, k)
        x0, y0 = rng.uniform(0, 20, 2)
        vx.append(x0 + r * np.cos(ang))
        vy.append(y0 + r * np.sin(ang))
        offsets.append(offsets[-1] + k)
    vx, vy, offsets = np.concatenate(vx), np.concatenate(vy), np.array(offsets, dtype=np.int64)
    bbox = np.array([[vx[a:b].min(), vy[a:b].min(), vx[a:b].max(), vy[a:b].max()]
                     for a, b in zip(offsets[:-1], offsets[1:])])
    px, py = rng.uniform(0, 20, 5000), rng.uniform(0, 20, 5000)
    # include exact vertices so the boundary rule is exercised
    px[:50], py[:50] = vx[:50], vy[:50]
    np_impl, nb_impl = both(geometry.IMPLEMENTATIONS)
    assert np.array_equal(np_impl(px, py, vx, vy, offsets, bbox), nb_impl(px, py, vx, vy, offsets, bbox))


@needs_numba
def test_pair_counts_parity(rng):
    x = rng.integers(0, 10, 400).astype(float)
    y = rng.integers(0, 10, 400).astype(float)
    np_impl, nb_impl = both(ranking.IMPLEMENTATIONS)
    assert tuple(np_impl(x, y)) == tuple(nb_impl(x, y))


@needs_numba
@pytest.mark.parametrize("kind", ["edge", "word", "feature"])
def test_sgd_parity(rng, kind):
    n, d, steps = 40, 12, 3000
    Z0 = rng.uniform(-0.1, 0.1, (n, d))
    V0 = rng.uniform(-0.1, 0.1, (25, d))
    W0 = rng.uniform(-0.05, 0.05, (d, 7))
    X = rng.normal(size=(100, 7))
    a, c, g = (rng.integers(0, n, steps) for _ in range(3))
    tc, tn = rng.integers(0, 25, steps), rng.integers(0, 25, steps)
    sc, sn = rng.integers(0, 100, steps), rng.integers(0, 100, steps)
    outs = []
    for impl in both(sgd.IMPLEMENTATIONS):
        Z, V, W, b, losses = Z0.copy(), V0.copy(), W0.copy(), np.zeros(d), np.empty(steps)
        if kind == "edge":
            skipped = impl["edge"](Z, a, c, g, 0.05, 1.0, losses)
            params = (Z,)
        elif kind == "word":
            skipped = impl["word"](Z, V, a, tc, tn, 0.01, 1.0, losses)
            params = (Z, V)
        else:
            skipped = impl["feature"](Z, W, b, X, a, sc, sn, 0.01, 1.0, losses)
            params = (Z, W, b)
        outs.append((params, losses, skipped))
    (p1, l1, s1), (p2, l2, s2) = outs
    assert s1 == s2
    assert np.allclose(l1, l2, rtol=1e-9, atol=1e-12)
    for u, v in zip(p1, p2):
        assert np.allclose(u, v, rtol=1e-9, atol=1e-12)


@needs_numba
def test_tree_parity(rng):
    X = rng.normal(size=(300, 6))
    y = X[:, 0] + np.sin(X[:, 1]) + 0.1 * rng.normal(size=300)
    idx = rng.integers(0, 300, 300).astype(np.int64)
    np_impl, nb_impl = both(tree.IMPLEMENTATIONS)
    for depth, min_leaf, n_try in ((10, 2, 2), (-1, 1, 6), (3, 5, 1)):
        t1 = np_impl["build"](X, y, idx, depth, min_leaf, n_try, 987)
        t2 = nb_impl["build"](X, y, idx, depth, min_leaf, n_try, 987)
        assert all(np.array_equal(u, v) for u, v in zip(t1, t2))
        Xt = rng.normal(size=(50, 6))
        assert np.array_equal(np_impl["predict"](Xt, *t1), nb_impl["predict"](Xt, *t2))


def test_env_flag_selects_numpy_backend():
    code = "import m3g; from m3g.kernels import sgd; print(m3g.BACKEND, sgd.edge_epoch is sgd._edge_numpy)"
    env = dict(os.environ, M3G_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_default_backend_matches_availability():
    if os.environ.get("M3G_DISABLE_NUMBA"):
        assert _accel.BACKEND == "numpy"
    else:
        assert _accel.BACKEND == ("numba" if _accel.HAVE_NUMBA else "numpy")
