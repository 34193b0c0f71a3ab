"""Repeated-holdout attribute prediction and proximity correlation."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from ..errors import DataFormatError, EvaluationError
from ..geo import Modality, haversine_km_array
from .decomposition import pca_fit_transform
from .forest import RandomForest
from .metrics import METRICS, spearman
from .regression import DEFAULT_RIDGE, fit_linear

MIN_COVERAGE = 20
MIN_PAIRS = 30


@dataclass
class AttributeTable:
    ids: list[str]
    names: list[str]
    values: np.ndarray  # len(ids) x len(names); NaN marks missing

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.ids), len(self.names)):
            raise DataFormatError(f"attribute matrix {self.values.shape} does not match ids/names")
        if len(set(self.ids)) != len(self.ids):
            raise DataFormatError("duplicate ids in attribute table")
        if np.isinf(self.values).any():
            raise DataFormatError("attribute values must be finite or missing")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def subset(self, names: Sequence[str]) -> "AttributeTable":
        cols = [self.names.index(n) for n in names]
        return AttributeTable(list(self.ids), list(names), self.values[:, cols])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + self.names)
            for id_, row in zip(self.ids, self.values):
                w.writerow([id_] + ["" if math.isnan(v) else repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "AttributeTable":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "id" or len(rows[0]) < 2:
            raise DataFormatError(f"{path}: header must be id,attr_1,...")
        names = rows[0][1:]
        try:
            vals = [[float(v) if v.strip() else math.nan for v in r[1:]] for r in rows[1:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc}") from None
        if any(len(v) != len(names) for v in vals):
            raise DataFormatError(f"{path}: ragged rows")
        return cls([r[0] for r in rows[1:]], names, np.array(vals).reshape(len(vals), len(names)))


@dataclass
class DownstreamProtocol:
    rounds: int = 20
    test_frac: float = 0.15
    pca_dims: int = 50
    models: tuple[str, ...] = ("linear", "forest")
    ridge: float = DEFAULT_RIDGE
    forest_trees: int = 100
    forest_depth: int = 10
    forest_min_leaf: int = 2
    forest_feature_frac: float = 1 / 3
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or not 0 < self.test_frac < 1:
            raise EvaluationError("rounds must be >= 1 and test_frac in (0, 1)")
        bad = set(self.models) - {"linear", "forest"}
        if bad:
            raise EvaluationError(f"unknown models {sorted(bad)}")


@dataclass
class ReportRow:
    attribute: str
    model: str
    metric: str
    mean: float
    std: float
    scope: str = "all"


@dataclass
class EvalReport:
    rows: list[ReportRow]
    rounds: int
    seeds: list[int]
    protocol: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict, repr=False)

    def get(self, attribute: str, model: str, metric: str, scope: str = "all") -> ReportRow:
        for r in self.rows:
            if (r.attribute, r.model, r.metric, r.scope) == (attribute, model, metric, scope):
                return r
        raise KeyError((attribute, model, metric, scope))

    def mean_over_attributes(self, model: str, metric: str, scope: str = "all") -> float:
        vals = [r.mean for r in self.rows if r.model == model and r.metric == metric and r.scope == scope]
        return float(np.mean(vals))

    def to_csv(self, path: str | Path) -> None:
        scoped = any(r.scope != "all" for r in self.rows)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["attribute", "model", "metric", "mean", "std"] + (["scope"] if scoped else []))
            for r in self.rows:
                w.writerow([r.attribute, r.model, r.metric, repr(r.mean), repr(r.std)] + ([r.scope] if scoped else []))


def _align(embeddings, ids: Sequence[str] | None, attributes: AttributeTable) -> tuple[np.ndarray, np.ndarray]:
    matrix = np.asarray(getattr(embeddings, "matrix", embeddings), dtype=float)
    ids = list(getattr(embeddings, "ids", ids) or [])
    if not ids:
        raise EvaluationError("embedding ids are required")
    pos = {id_: i for i, id_ in enumerate(ids)}
    missing = [a for a in attributes.ids if a not in pos]
    if missing:
        raise EvaluationError(f"attribute ids missing from embeddings: {missing[:5]}")
    return matrix, np.array([pos[a] for a in attributes.ids], dtype=np.int64)


def run_downstream(embeddings, attributes: AttributeTable, protocol: DownstreamProtocol | None = None,
                   ids: Sequence[str] | None = None, groups: Mapping[str, str] | None = None) -> EvalReport:
    """Predict every attribute from PCA-reduced embeddings over reshuffled splits.

    Round ``i`` uses seed ``protocol.seed + i`` for both the split and the
    forest. ``groups`` (id -> tag, e.g. city) adds per-group test scores
    alongside the pooled ones.
    """
    protocol = protocol or DownstreamProtocol()
    matrix, rows = _align(embeddings, ids, attributes)
    n_all, d = matrix.shape
    k = min(protocol.pca_dims, d, n_all - 1)
    feats = pca_fit_transform(matrix, k).scores[rows]

    tags = None
    if groups is not None:
        tags = np.array([groups[a] for a in attributes.ids], dtype=object)
    scopes = ["all"] + (sorted(set(tags)) if tags is not None else [])

    values: dict = {}
    seeds = [protocol.seed + i for i in range(protocol.rounds)]
    for j, name in enumerate(attributes.names):
        y_all = attributes.values[:, j]
        have = np.flatnonzero(~np.isnan(y_all))
        if have.size < MIN_COVERAGE:
            raise EvaluationError(f"attribute {name!r} has {have.size} values; need >= {MIN_COVERAGE}")
        for seed in seeds:
            rng = np.random.default_rng(seed)
            perm = have[rng.permutation(have.size)]
            n_test = max(2, int(round(protocol.test_frac * have.size)))
            test, train = perm[:n_test], perm[n_test:]
            for model in protocol.models:
                if model == "linear":
                    pred = fit_linear(feats[train], y_all[train], protocol.ridge).predict(feats[test])
                else:
                    forest = RandomForest(protocol.forest_trees, protocol.forest_depth, protocol.forest_min_leaf,
                                          protocol.forest_feature_frac, True, seed)
                    pred = forest.fit(feats[train], y_all[train]).predict(feats[test])
                for scope in scopes:
                    sel = np.ones(test.size, bool) if scope == "all" else tags[test] == scope
                    if sel.sum() < 2:
                        continue
                    for metric, fn in METRICS.items():
                        values.setdefault((scope, name, model, metric), []).append(fn(y_all[test][sel], pred[sel]))

    report_rows = []
    for scope in scopes:
        for name in attributes.names:
            for model in protocol.models:
                for metric in METRICS:
                    v = values.get((scope, name, model, metric))
                    if not v:
                        continue
                    arr = np.asarray(v)
                    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                    report_rows.append(ReportRow(name, model, metric, float(arr.mean()), std, scope))
    return EvalReport(report_rows, protocol.rounds, seeds, asdict(protocol), values)


@dataclass
class ProximityResult:
    pairs: np.ndarray  # M x 2 node indices, i < j
    proximity: np.ndarray
    embed_dist: np.ndarray
    spearman: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["proximity", "embed_dist"])
            for p, e in zip(self.proximity, self.embed_dist):
                w.writerow([repr(float(p)), repr(float(e))])


def unrank_pairs(k: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map row-major indices over the strict upper triangle to ``(i, j)``."""
    k = np.asarray(k, dtype=np.int64)

    def start(i):
        return i * (2 * n - i - 1) // 2

    i = np.floor(n - 0.5 - np.sqrt((n - 0.5) ** 2 - 2.0 * k)).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    for _ in range(2):
        i = np.where(start(i) > k, i - 1, i)
        i = np.where(start(i + 1) <= k, i + 1, i)
    j = k - start(i) + i + 1
    return i, j


def proximity_correlation(embeddings, g, modality: Modality | str, sample_frac: float, seed: int = 0,
                          min_pairs: int = MIN_PAIRS) -> ProximityResult:
    """Spearman correlation between pair proximity and embedding L2 distance.

    Proximity is centroid distance in km for DIST and the summed trip weight in
    both directions for MOB. Pairs are a uniform sample without replacement of
    the unordered node pairs; ``sample_frac >= 1`` enumerates all of them.
    """
    modality = Modality.parse(modality)
    Z = np.asarray(getattr(embeddings, "matrix", embeddings), dtype=float)
    n = g.n_nodes
    if n < 2 or Z.shape[0] != n:
        raise EvaluationError("need >= 2 nodes and one embedding row per graph node")
    total = n * (n - 1) // 2
    if sample_frac >= 1:
        picked = np.arange(total, dtype=np.int64)
    else:
        m = int(round(sample_frac * total))
        if m < min_pairs:
            raise EvaluationError(f"sample of {m} pairs is below the minimum of {min_pairs}")
        picked = np.sort(np.random.default_rng(seed).choice(total, size=m, replace=False))
    i, j = unrank_pairs(picked, n)

    if modality is Modality.DIST:
        lon = np.array([nb.centroid[0] for nb in g.neighborhoods])
        lat = np.array([nb.centroid[1] for nb in g.neighborhoods])
        prox = haversine_km_array(lon[i], lat[i], lon[j], lat[j])
    elif modality is Modality.MOB:
        adj = g.adjacency(Modality.MOB)
        A = sparse.csr_matrix((adj.weights, adj.indices, adj.indptr), shape=(n, n))
        prox = np.asarray(A[i, j]).ravel() + np.asarray(A[j, i]).ravel()
    else:
        raise EvaluationError(f"no proximity defined for {modality.value}")
    emb = np.linalg.norm(Z[i] - Z[j], axis=1)
    return ProximityResult(np.stack([i, j], axis=1), prox, emb, spearman(prox, emb))
