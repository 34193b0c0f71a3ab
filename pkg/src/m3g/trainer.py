"""Triplet losses, their gradients, SGD updates and the three-stage schedule."""
from __future__ import annotations

import csv
import logging
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoders import (
    DEFAULT_DIM,
    DEFAULT_SCALE,
    EmbeddingTable,
    FeatureEncoder,
    WordEncoder,
    init_embeddings,
    init_feature_encoder,
    init_word_encoder,
    load_pretrained_words,
)
from .errors import ConfigError, DimensionError, TrainingError
from .geo import Modality
from .kernels import sgd
from .multigraph import ThresholdFn
from .samplers import POI, SV, EdgeSampler, IntraSampler, Triplet, edge_kind, make_epoch_schedule

log = logging.getLogger(__name__)

EDGE = "EDGE"


def triplet_loss(za, ec, en, margin: float = 1.0) -> float:
    """``max(0, M + |za - ec| - |za - en|)``."""
    za, ec, en = (np.asarray(v, dtype=float) for v in (za, ec, en))
    if not (za.shape == ec.shape == en.shape):
        raise DimensionError(f"triplet shapes differ: {za.shape}, {ec.shape}, {en.shape}")
    if not margin > 0:
        raise ConfigError("margin must be > 0")
    return max(0.0, margin + (float(np.linalg.norm(za - ec)) - float(np.linalg.norm(za - en))))


@dataclass
class TripletGrads:
    za: np.ndarray
    ec: np.ndarray
    en: np.ndarray
    skipped: bool = False


def triplet_grads(za, ec, en, margin: float = 1.0) -> TripletGrads:
    """Gradients of :func:`triplet_loss` w.r.t. anchor, context and negative.

    Zero when the hinge is inactive. At a zero-distance singularity with an
    active hinge the subgradient 0 is returned with ``skipped=True``.
    """
    za, ec, en = (np.asarray(v, dtype=float) for v in (za, ec, en))
    zero = np.zeros_like(za)
    if triplet_loss(za, ec, en, margin) <= 0.0:
        return TripletGrads(zero, zero.copy(), zero.copy())
    vc, vn = za - ec, za - en
    dc, dn = np.linalg.norm(vc), np.linalg.norm(vn)
    if dc == 0.0 or dn == 0.0:
        return TripletGrads(zero, zero.copy(), zero.copy(), skipped=True)
    uc, un = vc / dc, vn / dn
    return TripletGrads(uc - un, -uc, un)


def feature_triplet_grads(za, W, b, xc, xn, margin: float = 1.0):
    """Loss gradients for a street-view triplet: ``(g_za, g_W, g_b)``."""
    g = triplet_grads(za, W @ xc + b, W @ xn + b, margin)
    g_w = np.outer(g.ec, xc) + np.outer(g.en, xn)
    return g.za, g_w, g.ec + g.en


@dataclass
class TrainConfig:
    d: int = DEFAULT_DIM
    margin: float = 1.0
    seed: int = 0
    init_scale: float = DEFAULT_SCALE
    epochs_sv: int = 50
    epochs_poi: int = 50
    epochs_edge: int = 50
    lr_sv: float = 0.01
    lr_poi: float = 0.01
    lr_edge: float = 0.05
    # triplets per kind per epoch; 0 means "one per neighborhood"
    triplets_sv: int = 2000
    triplets_poi: int = 1000
    triplets_edge: int = 500
    edges: tuple[str, ...] = ("DIST", "MOB")
    threshold_dist: str = "top_k:5"
    threshold_mob: str = "identity"
    stage_order: tuple[str, ...] = (SV, POI, EDGE)
    pretrained_words: str = ""

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError("margin must be > 0")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        for name in ("lr_sv", "lr_poi", "lr_edge"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("epochs_sv", "epochs_poi", "epochs_edge", "triplets_sv", "triplets_poi", "triplets_edge"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        self.edges = tuple(Modality.parse(m).value for m in self.edges)
        if any(m not in ("DIST", "MOB") for m in self.edges):
            raise ConfigError(f"edge modalities must be DIST/MOB, got {self.edges}")
        self.stage_order = tuple(s.upper() for s in self.stage_order)
        if sorted(self.stage_order) != sorted((SV, POI, EDGE)):
            raise ConfigError(f"stage_order must be a permutation of SV, POI, EDGE: {self.stage_order}")
        for m in ("dist", "mob"):
            ThresholdFn.parse(getattr(self, f"threshold_{m}"))

    def threshold(self, modality: str) -> ThresholdFn:
        return ThresholdFn.parse(getattr(self, f"threshold_{modality.lower()}"))

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = ",".join(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        """Build from string-valued key/value pairs (unknown keys raise)."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().lower()
            if key not in known:
                raise ConfigError(f"unknown training config key {key!r}")
            default = getattr(cls(), key)
            try:
                if isinstance(default, tuple):
                    kwargs[key] = tuple(s.strip() for s in str(raw).replace("+", ",").split(",") if s.strip())
                elif isinstance(default, bool):
                    kwargs[key] = str(raw).strip().lower() in ("1", "true", "yes")
                else:
                    kwargs[key] = type(default)(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**kwargs)


def sub_seed(master: int, name: str) -> np.random.SeedSequence:
    """Named child seed of ``master``; stable across runs and platforms."""
    return np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])


@dataclass
class DataBundle:
    """Everything training needs, already resolved to indices."""

    ids: list[str]
    features: np.ndarray  # street-view features, rows indexed by container indices
    containers: Sequence  # Container per neighborhood, in ``ids`` order
    vocabulary: dict[str, int]
    graph: object  # MultiGraph


@dataclass
class EpochStat:
    epoch: int
    kind: str
    mean_loss: float
    active_fraction: float
    skipped: int = 0


@dataclass
class TrainState:
    embeddings: EmbeddingTable
    feature_encoder: FeatureEncoder | None
    word_encoder: WordEncoder | None
    margin: float = 1.0
    epochs_done: dict[str, int] = field(default_factory=lambda: {SV: 0, POI: 0, EDGE: 0})
    skipped: int = 0
    # street-view feature rows addressed by SV triplets
    features: np.ndarray | None = field(default=None, repr=False)

    def check_finite(self, where: str) -> None:
        groups = {"embeddings": self.embeddings.matrix}
        if self.feature_encoder is not None:
            groups["W"] = self.feature_encoder.weight
            groups["b"] = self.feature_encoder.bias
        if self.word_encoder is not None:
            groups["words"] = self.word_encoder.matrix
        for name, arr in groups.items():
            if not np.all(np.isfinite(arr)):
                raise TrainingError(f"non-finite values in {name} after {where}")


def init_state(bundle: DataBundle, config: TrainConfig) -> TrainState:
    n = len(bundle.ids)
    emb = init_embeddings(n, config.d, np.random.default_rng(sub_seed(config.seed, "init-z")),
                          config.init_scale, ids=bundle.ids)
    fenc = None
    if bundle.features.size:
        fenc = init_feature_encoder(bundle.features.shape[1], config.d,
                                    np.random.default_rng(sub_seed(config.seed, "init-w")), config.init_scale)
    wenc = None
    if bundle.vocabulary:
        rng = np.random.default_rng(sub_seed(config.seed, "init-words"))
        if config.pretrained_words:
            wenc = load_pretrained_words(config.pretrained_words, config.d, bundle.vocabulary, rng, config.init_scale)
        else:
            wenc = init_word_encoder(bundle.vocabulary, config.d, rng, config.init_scale)
    return TrainState(emb, fenc, wenc, margin=config.margin,
                      features=np.ascontiguousarray(bundle.features, dtype=float))


def _check_status(status: int, kind: str, anchors, ctx, neg) -> int:
    if status < 0:
        t = -status - 1
        raise TrainingError(
            f"non-finite loss at {kind} step {t}: anchor={int(anchors[t])} "
            f"context={int(ctx[t])} negative={int(neg[t])}"
        )
    return status


def apply_batch(state: TrainState, kind: str, anchors, ctx, neg, lr: float, losses: np.ndarray | None = None):
    """Run SGD over a pre-sampled index stream of one triplet family.

    ``kind`` is ``SV`` (ctx/neg index feature rows), ``POI`` (vocabulary rows)
    or any ``EDGE:*`` kind (neighborhood rows). Returns per-step losses.
    """
    anchors = np.ascontiguousarray(anchors, dtype=np.int64)
    ctx = np.ascontiguousarray(ctx, dtype=np.int64)
    neg = np.ascontiguousarray(neg, dtype=np.int64)
    if losses is None:
        losses = np.zeros(anchors.size)
    Z = state.embeddings.matrix
    M = float(state.margin)
    if kind == SV:
        enc = state.feature_encoder
        status = sgd.feature_epoch(Z, enc.weight, enc.bias, state.features, anchors, ctx, neg, lr, M, losses)
    elif kind == POI:
        status = sgd.word_epoch(Z, state.word_encoder.matrix, anchors, ctx, neg, lr, M, losses)
    elif kind.startswith(EDGE):
        status = sgd.edge_epoch(Z, anchors, ctx, neg, lr, M, losses)
    else:
        raise ConfigError(f"unknown triplet kind {kind!r}")
    state.skipped += _check_status(status, kind, anchors, ctx, neg)
    return losses


def sgd_step(state: TrainState, triplet: Triplet, lr: float, features: np.ndarray | None = None) -> TrainState:
    """Apply one triplet in place and return ``state``."""
    if not lr > 0:
        raise ConfigError("learning rate must be > 0")
    if triplet.kind == SV:
        if features is not None:
            state.features = np.ascontiguousarray(features, dtype=float)
        ctx, neg = triplet.context, triplet.negative
    elif triplet.kind == POI:
        ctx, neg = state.word_encoder.row(triplet.context), state.word_encoder.row(triplet.negative)
    else:
        ctx, neg = triplet.context, triplet.negative
    apply_batch(state, triplet.kind, [triplet.anchor], [ctx], [neg], lr)
    state.check_finite(f"{triplet.kind} step")
    return state


@dataclass
class TrainResult:
    state: TrainState
    history: list[EpochStat]
    initial_embeddings: np.ndarray

    def history_for(self, kind: str) -> list[EpochStat]:
        return [h for h in self.history if h.kind == kind]


def _count(configured: int, n_nodes: int) -> int:
    return configured if configured > 0 else n_nodes


def run_training(bundle: DataBundle, config: TrainConfig) -> TrainResult:
    """Minimise the street-view, POI and edge losses in sequence.

    Stage 3 interleaves all configured edge modalities with equal triplet
    counts per epoch; its history has one ``EDGE`` row per epoch (all edge
    triplets) plus one row per modality. All parameters stay trainable in
    every stage.
    """
    state = init_state(bundle, config)
    initial = state.embeddings.matrix.copy()
    n = len(bundle.ids)
    history: list[EpochStat] = []

    for stage in config.stage_order:
        rng = np.random.default_rng(sub_seed(config.seed, f"stage-{stage}"))
        if stage in (SV, POI):
            epochs = config.epochs_sv if stage == SV else config.epochs_poi
            if epochs == 0:
                continue
            sampler = IntraSampler(bundle.containers, stage, bundle.vocabulary if stage == POI else None)
            lr = config.lr_sv if stage == SV else config.lr_poi
            count = _count(config.triplets_sv if stage == SV else config.triplets_poi, n)
            for epoch in range(epochs):
                a, c, ng = sampler.sample_batch(count, rng)
                before = state.skipped
                losses = apply_batch(state, stage, a, c, ng, lr)
                state.check_finite(f"{stage} epoch {epoch}")
                history.append(EpochStat(epoch, stage, float(losses.mean()), float((losses > 0).mean()),
                                         state.skipped - before))
                state.epochs_done[stage] += 1
        else:
            if config.epochs_edge == 0 or not config.edges:
                continue
            samplers = {edge_kind(m): EdgeSampler(bundle.graph, m, config.threshold(m)) for m in config.edges}
            count = _count(config.triplets_edge, n)
            for epoch in range(config.epochs_edge):
                schedule = np.array(make_epoch_schedule({k: count for k in samplers}, rng))
                a = np.empty(schedule.size, dtype=np.int64)
                c = np.empty_like(a)
                ng = np.empty_like(a)
                for kind, sampler in samplers.items():
                    slots = np.flatnonzero(schedule == kind)
                    a[slots], c[slots], ng[slots] = sampler.sample_batch(slots.size, rng)
                before = state.skipped
                losses = apply_batch(state, EDGE, a, c, ng, config.lr_edge)
                state.check_finite(f"{EDGE} epoch {epoch}")
                skipped = state.skipped - before
                history.append(EpochStat(epoch, EDGE, float(losses.mean()), float((losses > 0).mean()), skipped))
                for kind in samplers:
                    sel = losses[schedule == kind]
                    history.append(EpochStat(epoch, kind, float(sel.mean()), float((sel > 0).mean()), skipped))
                state.epochs_done[EDGE] += 1
    if state.skipped:
        log.info("skipped %d zero-distance steps", state.skipped)
    return TrainResult(state, history, initial)


def write_loss_history(history: Sequence[EpochStat], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "kind", "mean_loss", "active_fraction"])
        for h in history:
            w.writerow([h.epoch, h.kind, repr(h.mean_loss), repr(h.active_fraction)])


def with_edges(config: TrainConfig, edges: str | Sequence[str]) -> TrainConfig:
    if isinstance(edges, str):
        edges = [e for e in edges.replace("+", ",").split(",") if e.strip()]
    return replace(config, edges=tuple(e.strip().upper() for e in edges))
