"""Neighborhood geometry, geotagged point data and container assignment."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import CoordinateError, DataFormatError, GeometryError
from .kernels.geometry import locate_in_polygons

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0


class Modality(str, Enum):
    STREETVIEW = "STREETVIEW"
    POI = "POI"
    DIST = "DIST"
    MOB = "MOB"

    @classmethod
    def parse(cls, value: "str | Modality") -> "Modality":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise DataFormatError(f"unknown modality {value!r}") from None


class AssignMode(str, Enum):
    POLYGON = "POLYGON"
    NEAREST_CENTROID = "NEAREST_CENTROID"


LonLat = tuple[float, float]


def _check_lonlat(p: Sequence[float]) -> None:
    lon, lat = p
    if not (-180.0 <= lon <= 180.0) or not (-90.0 <= lat <= 90.0):
        raise CoordinateError(f"coordinate out of range: lon={lon}, lat={lat}")


def haversine_km(a: Sequence[float], b: Sequence[float]) -> float:
    """Great-circle distance in km between two (lon, lat) points in degrees."""
    _check_lonlat(a)
    _check_lonlat(b)
    lon1, lat1 = map(math.radians, a)
    lon2, lat2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km_array(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Broadcasting haversine; inputs in degrees, no range checks."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=float)) for v in (lon1, lat1, lon2, lat2))
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, p3), orient(p1, p2, p4), orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, p3))
        or (o2 == 0 and on_seg(p1, p2, p4))
        or (o3 == 0 and on_seg(p3, p4, p1))
        or (o4 == 0 and on_seg(p3, p4, p2))
    )


def validate_ring(ring: Sequence[LonLat]) -> tuple[LonLat, ...]:
    """Return ``ring`` as an open tuple ring, raising on degenerate input.

    A trailing vertex equal to the first is dropped. Non-adjacent edges must
    not touch.
    """
    pts = [(float(x), float(y)) for x, y in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts.pop()
    if len(pts) < 3:
        raise GeometryError(f"polygon ring needs >= 3 vertices, got {len(pts)}")
    for p in pts:
        _check_lonlat(p)
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_intersect(a1, a2, pts[j], pts[(j + 1) % n]):
                raise GeometryError(f"polygon ring self-intersects (edges {i} and {j})")
    return tuple(pts)


def ring_centroid(ring: Sequence[LonLat]) -> LonLat:
    """Area centroid of a simple ring (vertex mean if the area vanishes)."""
    xs = np.array([p[0] for p in ring])
    ys = np.array([p[1] for p in ring])
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    cross = xs * yn - xn * ys
    area2 = cross.sum()
    if abs(area2) < 1e-15:
        return float(xs.mean()), float(ys.mean())
    cx = ((xs + xn) * cross).sum() / (3.0 * area2)
    cy = ((ys + yn) * cross).sum() / (3.0 * area2)
    return float(cx), float(cy)


@dataclass(frozen=True)
class Neighborhood:
    id: str
    centroid: LonLat
    polygon: tuple[LonLat, ...] | None = None
    city: str = ""

    def __post_init__(self):
        if not self.id:
            raise GeometryError("neighborhood id must be non-empty")
        _check_lonlat(self.centroid)
        if self.polygon is not None:
            xs = [p[0] for p in self.polygon]
            ys = [p[1] for p in self.polygon]
            cx, cy = self.centroid
            if not (min(xs) <= cx <= max(xs) and min(ys) <= cy <= max(ys)):
                raise GeometryError(f"centroid of {self.id} lies outside its polygon's bounding box")

    @classmethod
    def from_polygon(cls, id: str, ring: Sequence[LonLat], city: str = "") -> "Neighborhood":
        pts = validate_ring(ring)
        return cls(id=id, centroid=ring_centroid(pts), polygon=pts, city=city)

    @classmethod
    def from_centroid(cls, id: str, lon: float, lat: float, city: str = "") -> "Neighborhood":
        return cls(id=id, centroid=(float(lon), float(lat)), city=city)


@dataclass(frozen=True)
class PointDatum:
    """A geotagged observation: dense features (STREETVIEW) or a token bag (POI)."""

    modality: Modality
    location: LonLat
    features: tuple[float, ...] | None = None
    tokens: tuple[str, ...] | None = None

    def __post_init__(self):
        _check_lonlat(self.location)
        if self.modality is Modality.STREETVIEW:
            if not self.features:
                raise DataFormatError("STREETVIEW point needs a feature vector")
        elif self.modality is Modality.POI:
            if not self.tokens:
                raise DataFormatError("POI point needs a non-empty token bag")
        else:
            raise DataFormatError(f"{self.modality.value} is not a point modality")


@dataclass
class Container:
    neighborhood_id: str
    streetview_indices: list[int] = field(default_factory=list)
    poi_tokens: list[str] = field(default_factory=list)


@dataclass
class ContainerSet:
    """Containers in neighborhood order plus drop counts per point modality."""

    containers: list[Container]
    dropped: dict[str, int] = field(default_factory=dict)
    totals: dict[str, int] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.containers)

    def __len__(self):
        return len(self.containers)

    def __getitem__(self, i):
        return self.containers[i]


def check_unique_ids(neighborhoods: Sequence[Neighborhood]) -> None:
    seen = set()
    for nb in neighborhoods:
        if nb.id in seen:
            raise GeometryError(f"duplicate neighborhood id {nb.id!r}")
        seen.add(nb.id)


def _ring_store(neighborhoods: Sequence[Neighborhood]):
    offsets = [0]
    vx: list[float] = []
    vy: list[float] = []
    bbox = np.empty((len(neighborhoods), 4))
    for k, nb in enumerate(neighborhoods):
        xs = [p[0] for p in nb.polygon]
        ys = [p[1] for p in nb.polygon]
        vx.extend(xs)
        vy.extend(ys)
        offsets.append(len(vx))
        bbox[k] = (min(xs), min(ys), max(xs), max(ys))
    return np.array(vx), np.array(vy), np.array(offsets, dtype=np.int64), bbox


def locate(
    neighborhoods: Sequence[Neighborhood],
    lon: np.ndarray,
    lat: np.ndarray,
    mode: AssignMode | str = AssignMode.POLYGON,
) -> np.ndarray:
    """Index of the neighborhood holding each location, ``-1`` if none."""
    mode = AssignMode(mode)
    if not neighborhoods:
        raise GeometryError("no neighborhoods given")
    lon = np.ascontiguousarray(lon, dtype=float)
    lat = np.ascontiguousarray(lat, dtype=float)
    if mode is AssignMode.POLYGON:
        missing = [nb.id for nb in neighborhoods if nb.polygon is None]
        if missing:
            raise GeometryError(f"POLYGON mode needs polygons; centroid-only: {missing[:5]}")
        vx, vy, offsets, bbox = _ring_store(neighborhoods)
        return locate_in_polygons(lon, lat, vx, vy, offsets, bbox)
    return nearest_centroid(neighborhoods, lon, lat)


def nearest_centroid(neighborhoods: Sequence[Neighborhood], lon, lat, chunk: int = 4096) -> np.ndarray:
    """Nearest centroid by haversine; exact ties go to the smaller id."""
    order = sorted(range(len(neighborhoods)), key=lambda k: neighborhoods[k].id)
    clon = np.array([neighborhoods[k].centroid[0] for k in order])
    clat = np.array([neighborhoods[k].centroid[1] for k in order])
    order = np.array(order, dtype=np.int64)
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    out = np.empty(lon.shape[0], dtype=np.int64)
    for s in range(0, lon.shape[0], chunk):
        d = haversine_km_array(lon[s:s + chunk, None], lat[s:s + chunk, None], clon[None, :], clat[None, :])
        out[s:s + chunk] = order[np.argmin(d, axis=1)]
    return out


def assign_points(
    neighborhoods: Sequence[Neighborhood],
    points: Sequence[PointDatum],
    mode: AssignMode | str = AssignMode.POLYGON,
) -> ContainerSet:
    """Bucket point data into one container per neighborhood.

    Street-view indices refer to positions within the STREETVIEW subset of
    ``points`` (in input order). Points outside every polygon are dropped and
    counted in ``ContainerSet.dropped``.
    """
    if not neighborhoods:
        raise GeometryError("no neighborhoods given")
    check_unique_ids(neighborhoods)
    containers = [Container(nb.id) for nb in neighborhoods]
    lon = np.array([p.location[0] for p in points], dtype=float)
    lat = np.array([p.location[1] for p in points], dtype=float)
    where = locate(neighborhoods, lon, lat, mode) if points else np.empty(0, dtype=np.int64)

    dropped = {Modality.STREETVIEW.value: 0, Modality.POI.value: 0}
    totals = {Modality.STREETVIEW.value: 0, Modality.POI.value: 0}
    sv_index = 0
    for p, k in zip(points, where):
        key = p.modality.value
        totals[key] += 1
        if p.modality is Modality.STREETVIEW:
            if k >= 0:
                containers[k].streetview_indices.append(sv_index)
            sv_index += 1
        elif k >= 0:
            containers[k].poi_tokens.extend(p.tokens)
        if k < 0:
            dropped[key] += 1
    if any(dropped.values()):
        log.info("dropped points outside all neighborhoods: %s", dropped)
    return ContainerSet(containers, dropped, totals)


@dataclass
class ContainerReport:
    rows: list[tuple[str, int, int]]
    total_streetviews: int
    total_poi_tokens: int
    dropped: dict[str, int]


def build_containers_report(containers: ContainerSet | Iterable[Container]) -> ContainerReport:
    """Per-neighborhood street-view and POI-token counts with global totals."""
    rows = [(c.neighborhood_id, len(c.streetview_indices), len(c.poi_tokens)) for c in containers]
    dropped = dict(getattr(containers, "dropped", {}) or {})
    return ContainerReport(
        rows=rows,
        total_streetviews=sum(r[1] for r in rows),
        total_poi_tokens=sum(r[2] for r in rows),
        dropped=dropped,
    )


def streetview_matrix(points: Sequence[PointDatum]) -> np.ndarray:
    """Stack STREETVIEW feature vectors (input order) into an array."""
    feats = [p.features for p in points if p.modality is Modality.STREETVIEW]
    if not feats:
        return np.empty((0, 0))
    dims = {len(f) for f in feats}
    if len(dims) != 1:
        raise DataFormatError(f"STREETVIEW feature dimensions differ: {sorted(dims)}")
    return np.array(feats, dtype=float)
