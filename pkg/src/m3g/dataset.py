"""CSV readers/writers for data directories and their assembly into a bundle.

A data directory holds ``neighborhoods.csv``, ``points.csv`` and optionally
``relations.csv`` and ``attributes.csv``.
"""
from __future__ import annotations

import csv
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError, GeometryError
from .evaluation.protocol import AttributeTable
from .geo import AssignMode, Modality, Neighborhood, PointDatum, assign_points, streetview_matrix, validate_ring
from .multigraph import MultiGraph, RelationDatum, build_dist_edges, build_graph
from .samplers import build_vocabulary
from .trainer import DataBundle

log = logging.getLogger(__name__)

NEIGHBORHOODS = "neighborhoods.csv"
POINTS = "points.csv"
RELATIONS = "relations.csv"
ATTRIBUTES = "attributes.csv"

_COORD_HEADER = ["modality", "reciprocal", "src_lon", "src_lat", "dst_lon", "dst_lat", "weight"]
_ID_HEADER = ["modality", "reciprocal", "src_id", "dst_id", "weight"]


def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _read_rows(path: Path, required: Sequence[str]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise DataFormatError(f"{path}: missing columns {missing}")
        return list(reader)


def format_ring(ring: Sequence[tuple[float, float]]) -> str:
    return "; ".join(f"{x!r} {y!r}" for x, y in ring)


def parse_ring(text: str) -> list[tuple[float, float]]:
    try:
        return [(float(a), float(b)) for a, b in (v.split() for v in text.split(";") if v.strip())]
    except ValueError:
        raise DataFormatError(f"bad polygon ring {text[:60]!r}") from None


def write_neighborhoods(neighborhoods: Sequence[Neighborhood], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["id", "city", "lon", "lat", "wkt_polygon"])
        for nb in neighborhoods:
            ring = format_ring(nb.polygon) if nb.polygon is not None else ""
            w.writerow([nb.id, nb.city, repr(nb.centroid[0]), repr(nb.centroid[1]), ring])


def read_neighborhoods(path: str | Path) -> list[Neighborhood]:
    out = []
    for row in _read_rows(Path(path), ["id", "city", "lon", "lat"]):
        ring = (row.get("wkt_polygon") or "").strip()
        try:
            if ring:
                nb = Neighborhood(row["id"], (float(row["lon"]), float(row["lat"])),
                                  validate_ring(parse_ring(ring)), row["city"])
            else:
                nb = Neighborhood.from_centroid(row["id"], float(row["lon"]), float(row["lat"]), row["city"])
        except ValueError as exc:
            if isinstance(exc, GeometryError):
                raise
            raise DataFormatError(f"{path}: row {row['id']!r}: {exc}") from None
        out.append(nb)
    return out


def write_points(points: Sequence[PointDatum], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["modality", "lon", "lat", "payload"])
        for p in points:
            if p.modality is Modality.STREETVIEW:
                payload = ";".join(repr(float(v)) for v in p.features)
            else:
                payload = " ".join(p.tokens)
            w.writerow([p.modality.value, repr(p.location[0]), repr(p.location[1]), payload])


def read_points(path: str | Path) -> list[PointDatum]:
    out = []
    for row in _read_rows(Path(path), ["modality", "lon", "lat", "payload"]):
        m = Modality.parse(row["modality"])
        loc = (float(row["lon"]), float(row["lat"]))
        if m is Modality.STREETVIEW:
            try:
                feats = tuple(float(v) for v in row["payload"].split(";") if v.strip())
            except ValueError:
                raise DataFormatError(f"{path}: non-numeric STREETVIEW payload") from None
            out.append(PointDatum(m, loc, features=feats))
        else:
            out.append(PointDatum(m, loc, tokens=tuple(row["payload"].split())))
    return out


def write_relations(relations: Sequence[RelationDatum], path: str | Path) -> None:
    resolved = bool(relations) and all(r.src_id is not None for r in relations)
    if not resolved and any(r.origin is None for r in relations):
        raise DataFormatError("cannot mix id-resolved relations without coordinates and coordinate relations")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(_ID_HEADER if resolved else _COORD_HEADER)
        for r in relations:
            flag = "1" if r.reciprocal else "0"
            if resolved:
                w.writerow([r.modality.value, flag, r.src_id, r.dst_id, _num(r.weight)])
            else:
                w.writerow([r.modality.value, flag, repr(r.origin[0]), repr(r.origin[1]),
                            repr(r.dest[0]), repr(r.dest[1]), _num(r.weight)])


def read_relations(path: str | Path) -> list[RelationDatum]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    resolved = "src_id" in header
    rows = _read_rows(path, _ID_HEADER if resolved else _COORD_HEADER)
    out = []
    for row in rows:
        try:
            weight = float(row["weight"])
            recip = row["reciprocal"].strip() in ("1", "true", "True")
            if resolved:
                out.append(RelationDatum(Modality.parse(row["modality"]), weight, reciprocal=recip,
                                         src_id=row["src_id"], dst_id=row["dst_id"]))
            else:
                out.append(RelationDatum(
                    Modality.parse(row["modality"]), weight,
                    origin=(float(row["src_lon"]), float(row["src_lat"])),
                    dest=(float(row["dst_lon"]), float(row["dst_lat"])),
                    reciprocal=recip,
                ))
        except ValueError as exc:
            if isinstance(exc, DataFormatError):
                raise
            raise DataFormatError(f"{path}: {exc}") from None
    return out


@dataclass
class RawData:
    neighborhoods: list[Neighborhood]
    points: list[PointDatum]
    relations: list[RelationDatum]
    attributes: AttributeTable | None = None


def read_data_dir(data_dir: str | Path) -> RawData:
    d = Path(data_dir)
    if not (d / NEIGHBORHOODS).exists():
        raise DataFormatError(f"{d}: no {NEIGHBORHOODS}")
    nbs = read_neighborhoods(d / NEIGHBORHOODS)
    pts = read_points(d / POINTS) if (d / POINTS).exists() else []
    rels = read_relations(d / RELATIONS) if (d / RELATIONS).exists() else []
    attrs = AttributeTable.from_csv(d / ATTRIBUTES) if (d / ATTRIBUTES).exists() else None
    return RawData(nbs, pts, rels, attrs)


def assign_mode(neighborhoods: Sequence[Neighborhood]) -> AssignMode:
    return AssignMode.POLYGON if all(nb.polygon is not None for nb in neighborhoods) else AssignMode.NEAREST_CENTROID


@dataclass
class IngestReport:
    dropped_points: dict[str, int]
    dropped_relations: dict[str, int]
    dropped_self_loops: dict[str, int]

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped_points.values()) + sum(self.dropped_relations.values())


def build_bundle(raw: RawData, dist_policy=None, with_dist: bool = True) -> tuple[DataBundle, IngestReport]:
    """Assign points to containers, derive DIST edges and build the graph."""
    mode = assign_mode(raw.neighborhoods)
    containers = assign_points(raw.neighborhoods, raw.points, mode)
    relations = list(raw.relations)
    if with_dist and len(raw.neighborhoods) >= 2:
        relations += build_dist_edges(raw.neighborhoods, dist_policy, within_city=True)
    graph = build_graph(raw.neighborhoods, relations, mode)
    bundle = DataBundle(
        ids=[nb.id for nb in raw.neighborhoods],
        features=streetview_matrix(raw.points),
        containers=containers.containers,
        vocabulary=build_vocabulary(containers.containers),
        graph=graph,
    )
    report = IngestReport(dict(containers.dropped), dict(graph.dropped_unresolved), dict(graph.dropped_self_loops))
    return bundle, report


def load_bundle(data_dir: str | Path, dist_policy=None) -> tuple[DataBundle, IngestReport, RawData]:
    raw = read_data_dir(data_dir)
    bundle, report = build_bundle(raw, dist_policy)
    return bundle, report, raw


def load_graph(data_dir: str | Path, dist_policy=None) -> MultiGraph:
    raw = read_data_dir(data_dir)
    rels = list(raw.relations)
    if len(raw.neighborhoods) >= 2:
        rels += build_dist_edges(raw.neighborhoods, dist_policy, within_city=True)
    return build_graph(raw.neighborhoods, rels, assign_mode(raw.neighborhoods))


def _prefixed(id_: str, city: str) -> str:
    prefix = f"{city}/"
    return id_ if not city or id_.startswith(prefix) else prefix + id_


def merge_data_dirs(data_dirs: Sequence[str | Path], out_dir: str | Path) -> RawData:
    """Concatenate data directories, prefixing ids with ``<city>/``.

    No cross-city records are created; DIST edges are derived later within
    each city only.
    """
    if not data_dirs:
        raise DataFormatError("nothing to merge")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(data_dirs) == 1:
        src = Path(data_dirs[0])
        for name in (NEIGHBORHOODS, POINTS, RELATIONS, ATTRIBUTES):
            if (src / name).exists():
                shutil.copyfile(src / name, out / name)
        return read_data_dir(out)

    nbs: list[Neighborhood] = []
    pts: list[PointDatum] = []
    rels: list[RelationDatum] = []
    attr_ids: list[str] = []
    attr_rows: list[np.ndarray] = []
    attr_names: list[str] | None = None
    seen: set[str] = set()
    for d in data_dirs:
        raw = read_data_dir(d)
        rename = {}
        for nb in raw.neighborhoods:
            new_id = _prefixed(nb.id, nb.city)
            if new_id in seen:
                raise GeometryError(f"neighborhood id collision after prefixing: {new_id!r}")
            seen.add(new_id)
            rename[nb.id] = new_id
            nbs.append(Neighborhood(new_id, nb.centroid, nb.polygon, nb.city))
        pts.extend(raw.points)
        for r in raw.relations:
            if r.src_id is not None:
                r = RelationDatum(r.modality, r.weight, r.origin, r.dest, r.reciprocal,
                                  rename.get(r.src_id, r.src_id), rename.get(r.dst_id, r.dst_id))
            rels.append(r)
        if raw.attributes is not None:
            if attr_names is None:
                attr_names = raw.attributes.names
            elif raw.attributes.names != attr_names:
                raise DataFormatError(f"{d}: attribute columns differ from the first directory")
            attr_ids.extend(rename.get(i, i) for i in raw.attributes.ids)
            attr_rows.append(raw.attributes.values)
    attrs = None
    if attr_names is not None:
        attrs = AttributeTable(attr_ids, attr_names, np.vstack(attr_rows))
    merged = RawData(nbs, pts, rels, attrs)
    write_data_dir(merged, out)
    return merged


def write_data_dir(raw: RawData, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / NEIGHBORHOODS, out / POINTS]
    write_neighborhoods(raw.neighborhoods, paths[0])
    write_points(raw.points, paths[1])
    if raw.relations:
        paths.append(out / RELATIONS)
        write_relations(raw.relations, paths[-1])
    if raw.attributes is not None:
        paths.append(out / ATTRIBUTES)
        raw.attributes.to_csv(paths[-1])
    return paths


def city_of(neighborhoods: Sequence[Neighborhood]) -> dict[str, str]:
    return {nb.id: nb.city for nb in neighborhoods}
