"""Modality-tagged directed multi-graph over neighborhoods.

Each edge modality is held as CSR adjacency (``indptr``, ``indices``,
``weights``) with destinations sorted per source. Parallel records of one
modality are summed at build time; records of different modalities stay as
separate edge sets.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DataFormatError, EmptyNegativeSetError, GeometryError, GraphError, NoContextError
from .geo import AssignMode, Modality, Neighborhood, check_unique_ids, haversine_km_array, locate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelationDatum:
    """A weighted location pair; ``src_id``/``dst_id`` bypass spatial lookup."""

    modality: Modality
    weight: float
    origin: tuple[float, float] | None = None
    dest: tuple[float, float] | None = None
    reciprocal: bool = False
    src_id: str | None = None
    dst_id: str | None = None

    def __post_init__(self):
        if not self.weight >= 0:
            raise DataFormatError(f"relation weight must be >= 0, got {self.weight}")
        if (self.src_id is None) != (self.dst_id is None):
            raise DataFormatError("give both src_id and dst_id or neither")
        if self.src_id is None and (self.origin is None or self.dest is None):
            raise DataFormatError("relation needs coordinates or resolved ids")


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    modality: Modality
    weight: float


class ThresholdKind(str, Enum):
    STEP = "STEP"
    TOP_K = "TOP_K"
    IDENTITY = "IDENTITY"


@dataclass(frozen=True)
class ThresholdFn:
    """Per-modality weight gate deciding which edges can supply context.

    ``STEP(t)`` maps ``w`` to ``1`` if ``w > t`` else ``0``; ``TOP_K(k)`` gives
    ``1`` to the ``k`` heaviest outgoing edges of the anchor (ties broken by
    lower destination index); ``IDENTITY`` keeps the raw weight.
    """

    kind: ThresholdKind = ThresholdKind.IDENTITY
    param: float = 0.0

    @classmethod
    def step(cls, threshold: float) -> "ThresholdFn":
        return cls(ThresholdKind.STEP, float(threshold))

    @classmethod
    def top_k(cls, k: int) -> "ThresholdFn":
        if int(k) < 1:
            raise GraphError("TOP_K needs k >= 1")
        return cls(ThresholdKind.TOP_K, int(k))

    @classmethod
    def identity(cls) -> "ThresholdFn":
        return cls(ThresholdKind.IDENTITY)

    @classmethod
    def parse(cls, text: str) -> "ThresholdFn":
        """Parse ``identity``, ``step:<t>`` or ``top_k:<k>``."""
        name, _, arg = text.strip().partition(":")
        name = name.strip().lower()
        try:
            if name == "identity":
                return cls.identity()
            if name == "step":
                return cls.step(float(arg))
            if name in ("top_k", "topk", "knn"):
                return cls.top_k(int(arg))
        except ValueError:
            pass
        raise DataFormatError(f"bad threshold function {text!r}")

    def __str__(self):
        if self.kind is ThresholdKind.IDENTITY:
            return "identity"
        if self.kind is ThresholdKind.STEP:
            return f"step:{self.param!r}"
        return f"top_k:{int(self.param)}"

    def apply(self, weights: np.ndarray) -> np.ndarray:
        """Gate the outgoing weights of a single anchor (sorted by destination)."""
        w = np.asarray(weights, dtype=float)
        if self.kind is ThresholdKind.IDENTITY:
            return w.copy()
        if self.kind is ThresholdKind.STEP:
            return (w > self.param).astype(float)
        k = int(self.param)
        out = np.zeros_like(w)
        if w.size:
            order = np.lexsort((np.arange(w.size), -w))
            out[order[:k]] = 1.0
        return out


@dataclass
class Adjacency:
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def out(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[node], self.indptr[node + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    @property
    def n_edges(self) -> int:
        return int(self.indices.shape[0])


@dataclass
class MultiGraph:
    neighborhoods: list[Neighborhood]
    edges: dict[Modality, Adjacency]
    dropped_unresolved: dict[str, int] = field(default_factory=dict)
    dropped_self_loops: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.index = {nb.id: i for i, nb in enumerate(self.neighborhoods)}
        for adj in self.edges.values():
            for arr in (adj.indptr, adj.indices, adj.weights):
                arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.neighborhoods)

    @property
    def modalities(self) -> list[Modality]:
        return list(self.edges)

    def adjacency(self, modality: Modality | str) -> Adjacency:
        m = Modality.parse(modality)
        try:
            return self.edges[m]
        except KeyError:
            raise GraphError(f"graph has no {m.value} edges") from None

    def weight(self, modality: Modality | str, src: int, dst: int) -> float:
        idx, w = self.adjacency(modality).out(src)
        pos = np.searchsorted(idx, dst)
        return float(w[pos]) if pos < idx.size and idx[pos] == dst else 0.0

    def edge_list(self, modality: Modality | str) -> list[Edge]:
        m = Modality.parse(modality)
        adj = self.adjacency(m)
        return [
            Edge(int(s), int(d), m, float(w))
            for s in range(self.n_nodes)
            for d, w in zip(*adj.out(s))
        ]


def _csr(n: int, src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> Adjacency:
    if src.size:
        key = src.astype(np.int64) * n + dst
        uniq, inv = np.unique(key, return_inverse=True)
        wsum = np.zeros(uniq.size)
        np.add.at(wsum, inv, w)
        src, dst, w = uniq // n, uniq % n, wsum
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return Adjacency(np.cumsum(indptr), dst.astype(np.int64), w.astype(float))


def _default_resolve_mode(neighborhoods: Sequence[Neighborhood]) -> AssignMode:
    if all(nb.polygon is not None for nb in neighborhoods):
        return AssignMode.POLYGON
    return AssignMode.NEAREST_CENTROID


def build_graph(
    neighborhoods: Sequence[Neighborhood],
    relations: Sequence[RelationDatum],
    resolve: AssignMode | str | None = None,
) -> MultiGraph:
    """Resolve relation endpoints to neighborhoods and assemble the edge sets."""
    neighborhoods = list(neighborhoods)
    if not neighborhoods:
        raise GeometryError("no neighborhoods given")
    check_unique_ids(neighborhoods)
    n = len(neighborhoods)
    mode = AssignMode(resolve) if resolve is not None else _default_resolve_mode(neighborhoods)
    index = {nb.id: i for i, nb in enumerate(neighborhoods)}

    src = np.full(len(relations), -1, dtype=np.int64)
    dst = np.full(len(relations), -1, dtype=np.int64)
    spatial = [i for i, r in enumerate(relations) if r.src_id is None]
    for i, r in enumerate(relations):
        if r.src_id is not None:
            src[i] = index.get(r.src_id, -1)
            dst[i] = index.get(r.dst_id, -1)
    if spatial:
        lon = np.array([relations[i].origin[0] for i in spatial] + [relations[i].dest[0] for i in spatial])
        lat = np.array([relations[i].origin[1] for i in spatial] + [relations[i].dest[1] for i in spatial])
        where = locate(neighborhoods, lon, lat, mode)
        src[spatial] = where[: len(spatial)]
        dst[spatial] = where[len(spatial):]

    weights = np.array([r.weight for r in relations], dtype=float)
    mods = [Modality.parse(r.modality) for r in relations]
    recip = np.array([r.reciprocal for r in relations], dtype=bool)

    edges: dict[Modality, Adjacency] = {}
    dropped_unresolved: dict[str, int] = {}
    dropped_loops: dict[str, int] = {}
    mod_arr = np.array([m.value for m in mods], dtype=object)
    for m in dict.fromkeys(mods):
        sel = mod_arr == m.value
        ok = sel & (src >= 0) & (dst >= 0)
        dropped_unresolved[m.value] = int(sel.sum() - ok.sum())
        loops = ok & (src == dst)
        dropped_loops[m.value] = int(loops.sum())
        keep = ok & ~loops
        s, d, w, rc = src[keep], dst[keep], weights[keep], recip[keep]
        s_all = np.concatenate([s, d[rc]])
        d_all = np.concatenate([d, s[rc]])
        w_all = np.concatenate([w, w[rc]])
        edges[m] = _csr(n, s_all, d_all, w_all)
        if dropped_unresolved[m.value] or dropped_loops[m.value]:
            log.info(
                "%s: dropped %d unresolved relations, %d self-loops",
                m.value, dropped_unresolved[m.value], dropped_loops[m.value],
            )
    return MultiGraph(neighborhoods, edges, dropped_unresolved, dropped_loops)


@dataclass(frozen=True)
class KNN:
    k: int


ALL = "ALL"
KNN_DEFAULT_ABOVE = 2000
KNN_DEFAULT_K = 50


def centroid_distance_matrix(neighborhoods: Sequence[Neighborhood]) -> np.ndarray:
    lon = np.array([nb.centroid[0] for nb in neighborhoods])
    lat = np.array([nb.centroid[1] for nb in neighborhoods])
    return haversine_km_array(lon[:, None], lat[:, None], lon[None, :], lat[None, :])


def build_dist_edges(
    neighborhoods: Sequence[Neighborhood],
    max_pairs_policy: str | KNN | None = None,
    within_city: bool = True,
) -> list[RelationDatum]:
    """Reciprocal DIST records with weight ``1 / d_ij`` (centroid haversine, km).

    ``max_pairs_policy`` is ``"ALL"`` or ``KNN(k)``; ``None`` picks ``ALL`` up to
    2000 neighborhoods and ``KNN(50)`` beyond. With ``within_city`` pairs are
    only formed between neighborhoods sharing a city tag.
    """
    neighborhoods = list(neighborhoods)
    if len(neighborhoods) < 2:
        raise GraphError("need >= 2 neighborhoods for distance edges")
    if max_pairs_policy is None:
        max_pairs_policy = KNN(KNN_DEFAULT_K) if len(neighborhoods) > KNN_DEFAULT_ABOVE else ALL

    groups: dict[str, list[int]] = {}
    for i, nb in enumerate(neighborhoods):
        groups.setdefault(nb.city if within_city else "", []).append(i)

    out: list[RelationDatum] = []
    for members in groups.values():
        if len(members) < 2:
            continue
        sub = [neighborhoods[i] for i in members]
        d = centroid_distance_matrix(sub)
        iu, ju = np.triu_indices(len(sub), k=1)
        zero = d[iu, ju] == 0.0
        if zero.any():
            a, b = iu[zero][0], ju[zero][0]
            raise GeometryError(f"coincident centroids: {sub[a].id!r} and {sub[b].id!r}")
        if isinstance(max_pairs_policy, KNN):
            k = min(max_pairs_policy.k, len(sub) - 1)
            dd = d.copy()
            np.fill_diagonal(dd, np.inf)
            nn = np.argsort(dd, axis=1, kind="stable")[:, :k]
            pairs = sorted({(min(i, j), max(i, j)) for i in range(len(sub)) for j in nn[i]})
        elif max_pairs_policy == ALL:
            pairs = list(zip(iu.tolist(), ju.tolist()))
        else:
            raise GraphError(f"unknown pair policy {max_pairs_policy!r}")
        for i, j in pairs:
            out.append(
                RelationDatum(
                    modality=Modality.DIST,
                    weight=1.0 / float(d[i, j]),
                    origin=sub[i].centroid,
                    dest=sub[j].centroid,
                    reciprocal=True,
                    src_id=sub[i].id,
                    dst_id=sub[j].id,
                )
            )
    return out


def qualifying_edges(g: MultiGraph, anchor: int, modality: Modality | str, p: ThresholdFn):
    """Destinations of ``anchor`` with positive gated weight, and those weights."""
    idx, w = g.adjacency(modality).out(anchor)
    pw = p.apply(w)
    keep = pw > 0
    return idx[keep], pw[keep]


def context_distribution(g: MultiGraph, anchor: int, modality: Modality | str, p: ThresholdFn) -> np.ndarray:
    """Probability over all nodes of being drawn as context for ``anchor``."""
    dst, pw = qualifying_edges(g, anchor, modality, p)
    total = pw.sum()
    if dst.size == 0 or not total > 0:
        raise NoContextError(f"anchor {anchor} has no context under {Modality.parse(modality).value} / {p}")
    prob = np.zeros(g.n_nodes)
    prob[dst] = pw / total
    return prob


def negative_set(g: MultiGraph, anchor: int, modality: Modality | str, p: ThresholdFn) -> np.ndarray:
    """Sorted node indices with zero context probability, excluding the anchor."""
    prob = context_distribution(g, anchor, modality, p)
    mask = prob == 0
    mask[anchor] = False
    out = np.flatnonzero(mask)
    if out.size == 0:
        raise EmptyNegativeSetError(
            f"anchor {anchor} reaches every node under {Modality.parse(modality).value} / {p}"
        )
    return out
