"""Synthetic city with known communities, used as the offline ground truth.

Neighborhoods are small squares around centroids scattered about K spatial
cluster centres. Every point is placed inside its own square, and each square
sits well inside the disc of radius ``0.45 * nearest-centroid distance``, so
both polygon lookup and nearest-centroid lookup recover the generating
neighborhood exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dataset import RawData, write_data_dir
from .errors import ConfigError
from .evaluation.protocol import AttributeTable
from .geo import Modality, Neighborhood, PointDatum
from .multigraph import RelationDatum

KM_PER_DEG_LAT = 111.19492664455873  # 6371 km * pi / 180


@dataclass
class SynthConfig:
    n_neighborhoods: int = 200
    n_communities: int = 4
    feat_dim: int = 32
    vocab_size: int = 120
    streetviews_per_neighborhood: int = 50
    pois_per_neighborhood: int = 10
    tokens_per_poi: int = 4
    extent_km: float = 20.0
    cluster_spread_km: float = 4.0
    min_separation_km: float = 0.25
    feature_noise: float = 0.5
    token_focus: float = 3.0
    token_noise: float = 0.05
    mobility_scale: float = 0.5
    affinity_strength: float = 3.0
    mobility_noise: float = 0.5
    n_attributes: int = 6
    attribute_noise: float = 0.5
    center_lon: float = -87.65
    center_lat: float = 41.85
    city: str = "synth"
    n_cities: int = 1
    city_spacing_deg: float = 5.0
    seed: int = 0

    def __post_init__(self):
        counts = ("n_neighborhoods", "n_communities", "feat_dim", "vocab_size", "streetviews_per_neighborhood",
                  "pois_per_neighborhood", "tokens_per_poi", "n_attributes", "n_cities")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_communities > self.n_neighborhoods:
            raise ConfigError("n_communities must be <= n_neighborhoods")
        if self.n_neighborhoods < 2:
            raise ConfigError("need >= 2 neighborhoods")
        for name in ("extent_km", "cluster_spread_km", "min_separation_km"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("feature_noise", "token_noise", "mobility_scale", "mobility_noise", "attribute_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0 <= self.token_noise <= 1:
            raise ConfigError("token_noise must be in [0, 1]")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, values: dict) -> "SynthConfig":
        defaults = cls()
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().lower()
            if not hasattr(defaults, key):
                raise ConfigError(f"unknown synth config key {key!r}")
            try:
                kwargs[key] = type(getattr(defaults, key))(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**kwargs)


@dataclass
class SynthWorld:
    config: SynthConfig
    neighborhoods: list[Neighborhood]
    communities: np.ndarray
    positions_km: np.ndarray  # N x 2 planar offsets from the city centre
    points: list[PointDatum]
    relations: list[RelationDatum]
    attributes: AttributeTable
    attributes_true: AttributeTable
    community_means: np.ndarray = field(repr=False, default=None)
    affinity: np.ndarray = field(repr=False, default=None)

    @property
    def raw(self) -> RawData:
        return RawData(self.neighborhoods, self.points, self.relations, self.attributes)


def _to_lonlat(cfg: SynthConfig, xy_km: np.ndarray) -> np.ndarray:
    lon = cfg.center_lon + xy_km[..., 0] / (KM_PER_DEG_LAT * math.cos(math.radians(cfg.center_lat)))
    lat = cfg.center_lat + xy_km[..., 1] / KM_PER_DEG_LAT
    return np.stack([lon, lat], axis=-1)


def _place_centroids(cfg: SynthConfig, labels: np.ndarray, centers: np.ndarray, rng) -> np.ndarray:
    pos = np.empty((labels.size, 2))
    for i, c in enumerate(labels):
        for _ in range(1000):
            p = centers[c] + rng.normal(0.0, cfg.cluster_spread_km, size=2)
            if i == 0 or np.min(np.hypot(*(pos[:i] - p).T)) >= cfg.min_separation_km:
                break
        else:
            raise ConfigError("could not place centroids; lower min_separation_km or raise cluster_spread_km")
        pos[i] = p
    return pos


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else v - v.mean()


def generate(config: SynthConfig | None = None) -> SynthWorld:
    """Draw a synthetic city; identical configs give identical worlds."""
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    n, k = cfg.n_neighborhoods, cfg.n_communities
    half = cfg.extent_km / 2

    centers = rng.uniform(-half, half, size=(k, 2))
    labels = rng.permutation(np.arange(n) % k)
    pos = _place_centroids(cfg, labels, centers, rng)
    dmat = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
    np.fill_diagonal(dmat, np.inf)
    # square inscribed in a disc of radius 0.45 * nearest-neighbour distance
    half_side = 0.45 * dmat.min(axis=1) / math.sqrt(2) * 0.95
    np.fill_diagonal(dmat, 0.0)

    ids = [f"n{i:04d}" for i in range(n)]
    neighborhoods = []
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    for i in range(n):
        ring = _to_lonlat(cfg, pos[i] + corners * half_side[i])
        c = _to_lonlat(cfg, pos[i])
        neighborhoods.append(Neighborhood(ids[i], (float(c[0]), float(c[1])),
                                          tuple((float(x), float(y)) for x, y in ring), cfg.city))

    # street views: community mean + isotropic noise, norms O(1)
    f = cfg.feat_dim
    means = rng.normal(0.0, 1.0, size=(k, f)) / math.sqrt(f)
    points: list[PointDatum] = []
    for i in range(n):
        offs = rng.uniform(-1, 1, size=(cfg.streetviews_per_neighborhood, 2)) * half_side[i] * 0.9
        locs = _to_lonlat(cfg, pos[i] + offs)
        feats = means[labels[i]] + rng.normal(0.0, cfg.feature_noise / math.sqrt(f),
                                              size=(cfg.streetviews_per_neighborhood, f))
        for loc, x in zip(locs, feats):
            points.append(PointDatum(Modality.STREETVIEW, (float(loc[0]), float(loc[1])),
                                     features=tuple(float(v) for v in x)))

    # POI tokens from community-specific distributions over one vocabulary
    vocab = [f"t{j:03d}" for j in range(cfg.vocab_size)]
    logits = cfg.token_focus * rng.normal(size=(k, cfg.vocab_size))
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    probs = (1 - cfg.token_noise) * probs + cfg.token_noise / cfg.vocab_size
    for i in range(n):
        offs = rng.uniform(-1, 1, size=(cfg.pois_per_neighborhood, 2)) * half_side[i] * 0.9
        locs = _to_lonlat(cfg, pos[i] + offs)
        for loc in locs:
            toks = rng.choice(cfg.vocab_size, size=cfg.tokens_per_poi, p=probs[labels[i]])
            points.append(PointDatum(Modality.POI, (float(loc[0]), float(loc[1])),
                                     tokens=tuple(vocab[t] for t in toks)))

    # mobility: scale * exp(affinity) / (1 + km), lognormal noise, rounded
    affinity = cfg.affinity_strength * np.eye(k)
    lam = cfg.mobility_scale * np.exp(affinity[labels][:, labels]) / (1.0 + dmat)
    lam *= rng.lognormal(0.0, cfg.mobility_noise, size=lam.shape) if cfg.mobility_noise > 0 else 1.0
    trips = np.rint(lam)
    np.fill_diagonal(trips, 0.0)
    relations = []
    cents = [nb.centroid for nb in neighborhoods]
    for a, b in zip(*np.nonzero(trips)):
        relations.append(RelationDatum(Modality.MOB, float(trips[a, b]), origin=cents[a], dest=cents[b],
                                       reciprocal=False))

    # attributes: linear in (community one-hot, centroid), unit-variance signal
    onehot = np.eye(k)[labels]
    xy = np.array([[nb.centroid[0], nb.centroid[1]] for nb in neighborhoods])
    mix = np.linspace(0.2, 0.8, cfg.n_attributes) if cfg.n_attributes > 1 else np.array([0.5])
    names = [f"attr_{j + 1}" for j in range(cfg.n_attributes)]
    true = np.empty((n, cfg.n_attributes))
    for j in range(cfg.n_attributes):
        comm = _standardize(onehot @ rng.normal(size=k))
        loc = _standardize(xy @ rng.normal(size=2))
        true[:, j] = _standardize(math.sqrt(mix[j]) * comm + math.sqrt(1 - mix[j]) * loc)
    noisy = true + cfg.attribute_noise * rng.normal(size=true.shape)

    return SynthWorld(
        config=cfg,
        neighborhoods=neighborhoods,
        communities=labels,
        positions_km=pos,
        points=points,
        relations=relations,
        attributes=AttributeTable(ids, names, noisy),
        attributes_true=AttributeTable(ids, names, true),
        community_means=means,
        affinity=affinity,
    )


def generate_cities(config: SynthConfig | None = None) -> list[SynthWorld]:
    """One world per city, each with its own seed, tag and shifted centre.

    With ``n_cities == 1`` this is ``[generate(config)]``.
    """
    cfg = config or SynthConfig()
    if cfg.n_cities == 1:
        return [generate(cfg)]
    worlds = []
    for c in range(cfg.n_cities):
        seed = int(np.random.SeedSequence([cfg.seed, c]).generate_state(1)[0])
        worlds.append(generate(replace(cfg, n_cities=1, seed=seed, city=f"{cfg.city}{c}",
                                       center_lon=cfg.center_lon + c * cfg.city_spacing_deg)))
    return worlds


def oracle_attributes(world: SynthWorld) -> AttributeTable:
    """Noisy and noiseless attributes side by side (``attr``, ``attr_true``)."""
    names, cols = [], []
    for j, name in enumerate(world.attributes.names):
        names += [name, f"{name}_true"]
        cols += [world.attributes.values[:, j], world.attributes_true.values[:, j]]
    return AttributeTable(list(world.attributes.ids), names, np.stack(cols, axis=1))


def write_world(world: SynthWorld, out_dir: str | Path) -> list[Path]:
    """Write the data directory plus ``attributes_oracle.csv`` and ``communities.csv``."""
    out = Path(out_dir)
    paths = write_data_dir(world.raw, out)
    oracle_attributes(world).to_csv(out / "attributes_oracle.csv")
    with open(out / "communities.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("id,community\n")
        for nb, c in zip(world.neighborhoods, world.communities):
            fh.write(f"{nb.id},{int(c)}\n")
    return paths + [out / "attributes_oracle.csv", out / "communities.csv"]
