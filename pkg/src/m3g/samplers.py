"""Triplet samplers for the intra- and inter-neighborhood objectives.

Each sampler precomputes flat lookup tables once and then draws whole batches
with a :class:`numpy.random.Generator`; ``sample`` is ``sample_batch(1)``
unwrapped, so single draws and batches consume the random stream identically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyNegativeSetError, NoContextError, SamplingError
from .geo import Container, Modality
from .multigraph import MultiGraph, ThresholdFn, qualifying_edges

SV = "SV"
POI = "POI"


def edge_kind(modality: Modality | str) -> str:
    return f"EDGE:{Modality.parse(modality).value}"


@dataclass(frozen=True)
class Triplet:
    """One contrastive sample.

    ``context``/``negative`` are street-view indices (SV), token strings (POI)
    or neighborhood indices (EDGE kinds).
    """

    kind: str
    anchor: int
    context: int | str
    negative: int | str


def _draw_below(rng: np.random.Generator, sizes: np.ndarray) -> np.ndarray:
    """Uniform integers in ``[0, sizes)`` elementwise."""
    r = (rng.random(sizes.shape[0]) * sizes).astype(np.int64)
    return np.minimum(r, sizes - 1)


class IntraSampler:
    """Anchor uniform over non-empty containers, context uniform within the
    anchor's container, negative uniform over the items of all other containers.
    """

    def __init__(self, containers: Sequence[Container], kind: str, vocabulary: Mapping[str, int] | None = None):
        if kind not in (SV, POI):
            raise SamplingError(f"unknown intra kind {kind!r}")
        self.kind = kind
        bags = []
        for i, c in enumerate(containers):
            if kind == SV:
                items = np.asarray(c.streetview_indices, dtype=np.int64)
            else:
                if vocabulary is None:
                    vocabulary = build_vocabulary(containers)
                items = np.array([vocabulary[t] for t in c.poi_tokens], dtype=np.int64)
            if items.size:
                bags.append((i, items))
        if len(bags) < 2:
            raise SamplingError(f"{kind}: need >= 2 non-empty containers, have {len(bags)}")
        self.vocabulary = vocabulary
        self.tokens = None if vocabulary is None else _inverse_vocab(vocabulary)
        self.anchors = np.array([i for i, _ in bags], dtype=np.int64)
        self.sizes = np.array([b.size for _, b in bags], dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        self.items = np.concatenate([b for _, b in bags])
        self.total = int(self.items.size)

    def sample_batch(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        slot = rng.integers(self.anchors.size, size=n)
        start, size = self.starts[slot], self.sizes[slot]
        ctx = self.items[start + _draw_below(rng, size)]
        r = _draw_below(rng, self.total - size)
        neg = self.items[r + np.where(r >= start, size, 0)]
        return self.anchors[slot], ctx, neg

    def sample(self, rng: np.random.Generator) -> Triplet:
        a, c, n = self.sample_batch(1, rng)
        if self.kind == POI:
            return Triplet(POI, int(a[0]), self.tokens[c[0]], self.tokens[n[0]])
        return Triplet(SV, int(a[0]), int(c[0]), int(n[0]))


def _inverse_vocab(vocabulary: Mapping[str, int]) -> list[str]:
    inv = [""] * len(vocabulary)
    for t, i in vocabulary.items():
        inv[i] = t
    return inv


def build_vocabulary(containers: Sequence[Container]) -> dict[str, int]:
    """Token -> row index, in sorted token order."""
    return {t: i for i, t in enumerate(sorted({t for c in containers for t in c.poi_tokens}))}


class EdgeSampler:
    """Anchor uniform over nodes with a context distribution and a non-empty
    negative set; context by cumulative-sum inversion of the gated weights;
    negative uniform over the zero-probability complement.
    """

    def __init__(self, g: MultiGraph, modality: Modality | str, p: ThresholdFn):
        self.modality = Modality.parse(modality)
        self.kind = edge_kind(self.modality)
        self.threshold = p
        n = g.n_nodes
        anchors, ctx_ptr, ctx_dst, ctx_cum = [], [0], [], []
        excl_ptr, excl_key = [0], []
        self.skipped_dense = 0
        for a in range(n):
            dst, pw = qualifying_edges(g, a, self.modality, p)
            if dst.size == 0 or not pw.sum() > 0:
                continue
            if dst.size >= n - 1:
                self.skipped_dense += 1
                continue
            k = len(anchors)
            anchors.append(a)
            cum = np.cumsum(pw) / pw.sum()
            cum[-1] = 1.0
            ctx_dst.append(dst)
            # offset by slot so the concatenation stays globally sorted
            ctx_cum.append(cum + k)
            ctx_ptr.append(ctx_ptr[-1] + dst.size)
            ex = np.sort(np.append(dst, a))
            # x - (#excluded <= x) = r  <=>  x = r + #{j : ex[j] - j <= r}
            excl_key.append(k * (n + 1) + (ex - np.arange(ex.size)))
            excl_ptr.append(excl_ptr[-1] + ex.size)
        if not anchors:
            if self.skipped_dense:
                raise EmptyNegativeSetError(f"{self.kind}: every anchor reaches all nodes")
            raise NoContextError(f"{self.kind}: no node has qualifying edges under {p}")
        self.n_nodes = n
        self.anchors = np.array(anchors, dtype=np.int64)
        self.ctx_ptr = np.array(ctx_ptr, dtype=np.int64)
        self.ctx_dst = np.concatenate(ctx_dst).astype(np.int64)
        self.ctx_cum = np.concatenate(ctx_cum)
        self.excl_ptr = np.array(excl_ptr, dtype=np.int64)
        self.excl_key = np.concatenate(excl_key).astype(np.int64)

    def sample_batch(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        slot = rng.integers(self.anchors.size, size=n)
        u = rng.random(n)
        pos = np.searchsorted(self.ctx_cum, slot + u, side="right")
        pos = np.clip(pos, self.ctx_ptr[slot], self.ctx_ptr[slot + 1] - 1)
        ctx = self.ctx_dst[pos]

        n_excl = self.excl_ptr[slot + 1] - self.excl_ptr[slot]
        r = _draw_below(rng, self.n_nodes - n_excl)
        below = np.searchsorted(self.excl_key, slot * (self.n_nodes + 1) + r, side="right") - self.excl_ptr[slot]
        neg = r + below
        return self.anchors[slot], ctx, neg

    def sample(self, rng: np.random.Generator) -> Triplet:
        a, c, n = self.sample_batch(1, rng)
        return Triplet(self.kind, int(a[0]), int(c[0]), int(n[0]))


def sample_intra_sv(containers: Sequence[Container], rng: np.random.Generator) -> Triplet:
    return IntraSampler(containers, SV).sample(rng)


def sample_intra_poi(containers: Sequence[Container], rng: np.random.Generator) -> Triplet:
    return IntraSampler(containers, POI).sample(rng)


def sample_inter(g: MultiGraph, modality: Modality | str, p: ThresholdFn, rng: np.random.Generator) -> Triplet:
    return EdgeSampler(g, modality, p).sample(rng)


def make_epoch_schedule(counts: Mapping[str, int], rng: np.random.Generator) -> list[str]:
    """Shuffled sequence of triplet kinds holding exactly ``counts[k]`` of each."""
    if any(c < 0 for c in counts.values()):
        raise SamplingError("triplet counts must be >= 0")
    if sum(counts.values()) == 0:
        raise SamplingError("all triplet counts are zero")
    kinds = list(counts)
    seq = np.repeat(np.arange(len(kinds)), [counts[k] for k in kinds])
    rng.shuffle(seq)
    return [kinds[i] for i in seq]
