import math

import numpy as np
import pytest
from scipy import stats

from conftest import id_relation
from m3g.errors import EmptyNegativeSetError, SamplingError
from m3g.geo import Container, Neighborhood
from m3g.multigraph import ThresholdFn, build_graph, context_distribution, negative_set
from m3g.samplers import (
    POI,
    SV,
    EdgeSampler,
    IntraSampler,
    make_epoch_schedule,
    sample_inter,
    sample_intra_poi,
    sample_intra_sv,
)


def within_3_sigma(count, n, p):
    return abs(count - n * p) <= 3 * math.sqrt(n * p * (1 - p)) + 1e-9


def nodes(n):
    return [Neighborhood.from_centroid(f"n{i}", 0.01 * i, 0.0) for i in range(n)]


def test_two_single_image_containers_are_forced(rng):
    cs = [Container("a", [0]), Container("b", [1])]
    for _ in range(50):
        t = sample_intra_sv(cs, rng)
        assert (t.context, t.negative) == ((0, 1) if t.anchor == 0 else (1, 0))


def test_context_uniform_within_anchor(rng):
    cs = [Container("a", [0, 1, 2]), Container("b", [3])]
    a, c, _ = IntraSampler(cs, SV).sample_batch(60_000, rng)
    ctx = c[a == 0]
    for i in (0, 1, 2):
        assert within_3_sigma((ctx == i).sum(), ctx.size, 1 / 3)


def test_negatives_uniform_over_items_not_neighborhoods(rng):
    cs = [Container("a", [0]), Container("b", list(range(1, 11))), Container("c", list(range(11, 31)))]
    a, _, n = IntraSampler(cs, SV).sample_batch(90_000, rng)
    neg = n[a == 0]
    from_c = (neg >= 11).sum()
    assert within_3_sigma(from_c, neg.size, 20 / 30)


def test_poi_multiplicity_respected(rng):
    cs = [Container("a", [], ["cafe", "cafe", "bar"]), Container("b", [], ["park"])]
    s = IntraSampler(cs, POI)
    a, c, _ = s.sample_batch(60_000, rng)
    ctx = c[a == 0]
    assert within_3_sigma((ctx == s.vocabulary["cafe"]).sum(), ctx.size, 2 / 3)
    t = sample_intra_poi([Container("x", [], ["solo"]), Container("y", [], ["other"])], rng)
    assert {t.context, t.negative} == {"solo", "other"}


def test_intra_negative_never_from_anchor_container(rng):
    sizes = [3, 1, 5, 2, 7, 4]
    cs, k = [], 0
    for i, s in enumerate(sizes):
        cs.append(Container(f"c{i}", list(range(k, k + s))))
        k += s
    owner = np.repeat(np.arange(len(sizes)), sizes)
    a, c, n = IntraSampler(cs, SV).sample_batch(100_000, rng)
    assert (owner[n] != a).all()
    assert (owner[c] == a).all()


def test_anchor_marginal_chi_square(rng):
    cs = [Container(f"c{i}", list(range(10 * i, 10 * i + 1 + i % 4))) for i in range(40)]
    cs.insert(7, Container("empty", []))
    s = IntraSampler(cs, SV)
    a, _, _ = s.sample_batch(100_000, rng)
    assert 7 not in set(a.tolist())
    counts = np.bincount(a, minlength=len(cs))[s.anchors]
    assert stats.chisquare(counts).pvalue > 0.001


def test_intra_needs_two_nonempty(rng):
    with pytest.raises(SamplingError):
        IntraSampler([Container("a", [0]), Container("b", [])], SV)


def test_inter_context_frequencies(rng):
    g = build_graph(nodes(4), [id_relation("MOB", "n0", "n1", 4), id_relation("MOB", "n0", "n2", 1)])
    s = EdgeSampler(g, "MOB", ThresholdFn.identity())
    assert s.anchors.tolist() == [0]
    a, c, n = s.sample_batch(100_000, rng)
    assert within_3_sigma((c == 1).sum(), 100_000, 0.8)
    assert within_3_sigma((c == 2).sum(), 100_000, 0.2)
    assert (n == 3).all()


def test_top_k1_forces_context():
    step = float(np.degrees(1 / 6371.0))
    nbs = [Neighborhood.from_centroid(f"p{i}", 0.0, i * step) for i in range(3)]
    from m3g.multigraph import build_dist_edges
    g = build_graph(nbs, build_dist_edges(nbs))
    rng = np.random.default_rng(0)
    a, c, n = EdgeSampler(g, "DIST", ThresholdFn.top_k(1)).sample_batch(1000, rng)
    assert (c[a == 0] == 1).all() and (c[a == 2] == 1).all()
    assert (n[a == 0] == 2).all() and (n[a == 2] == 0).all()
    # node 1 ties between 0 and 2 at equal distance; the lower index wins
    assert (c[a == 1] == 0).all()


def test_two_node_graph_has_no_negatives():
    nbs = nodes(2)
    g = build_graph(nbs, [id_relation("DIST", "n0", "n1", 1.0, reciprocal=True)])
    with pytest.raises(EmptyNegativeSetError):
        sample_inter(g, "DIST", ThresholdFn.top_k(1), np.random.default_rng(0))


def test_inter_negatives_never_in_support(rng):
    recs = []
    for _ in range(40):
        s, d = rng.choice(15, 2, replace=False)
        recs.append(id_relation("MOB", f"n{s}", f"n{d}", int(rng.integers(1, 5))))
    g = build_graph(nodes(15), recs)
    p = ThresholdFn.identity()
    s = EdgeSampler(g, "MOB", p)
    a, c, n = s.sample_batch(100_000, rng)
    for anchor in s.anchors:
        prob = context_distribution(g, anchor, "MOB", p)
        sel = a == anchor
        assert (prob[c[sel]] > 0).all()
        assert np.isin(n[sel], negative_set(g, anchor, "MOB", p)).all()
        assert (n[sel] != anchor).all()


def test_inter_negative_uniform_over_complement(rng):
    g = build_graph(nodes(6), [id_relation("MOB", "n2", "n4", 1)])
    a, c, n = EdgeSampler(g, "MOB", ThresholdFn.identity()).sample_batch(60_000, rng)
    assert (a == 2).all() and (c == 4).all()
    for j in (0, 1, 3, 5):
        assert within_3_sigma((n == j).sum(), n.size, 0.25)


def test_dense_anchors_are_skipped():
    g = build_graph(nodes(3), [id_relation("MOB", "n0", "n1", 1), id_relation("MOB", "n0", "n2", 1),
                                id_relation("MOB", "n1", "n2", 1)])
    s = EdgeSampler(g, "MOB", ThresholdFn.identity())
    assert s.skipped_dense == 1 and s.anchors.tolist() == [1]


def test_epoch_schedule():
    rng = np.random.default_rng(3)
    seq = make_epoch_schedule({SV: 2, POI: 2, "EDGE:DIST": 2, "EDGE:MOB": 2}, rng)
    assert len(seq) == 8 and all(seq.count(k) == 2 for k in (SV, POI, "EDGE:DIST", "EDGE:MOB"))
    assert make_epoch_schedule({SV: 0, POI: 0, "EDGE:DIST": 5, "EDGE:MOB": 0}, rng) == ["EDGE:DIST"] * 5
    a = make_epoch_schedule({"x": 30, "y": 30}, np.random.default_rng(9))
    b = make_epoch_schedule({"x": 30, "y": 30}, np.random.default_rng(9))
    assert a == b
    with pytest.raises(SamplingError):
        make_epoch_schedule({"x": 0}, rng)


def test_streams_are_deterministic(world_bundle):
    bundle, _ = world_bundle
    s = IntraSampler(bundle.containers, SV)
    x = s.sample_batch(1000, np.random.default_rng(42))
    y = s.sample_batch(1000, np.random.default_rng(42))
    assert all(np.array_equal(u, v) for u, v in zip(x, y))
    e = EdgeSampler(bundle.graph, "DIST", ThresholdFn.top_k(5))
    x = e.sample_batch(1000, np.random.default_rng(42))
    y = e.sample_batch(1000, np.random.default_rng(42))
    assert all(np.array_equal(u, v) for u, v in zip(x, y))
