import numpy as np
import pytest

from conftest import square
from m3g.dataset import (
    RawData,
    build_bundle,
    city_of,
    merge_data_dirs,
    read_data_dir,
    read_relations,
    write_data_dir,
    write_relations,
)
from m3g.errors import DataFormatError, GeometryError
from m3g.evaluation.protocol import AttributeTable
from m3g.geo import Modality, Neighborhood, PointDatum
from m3g.multigraph import RelationDatum
from m3g.synth import SynthConfig, generate, write_world


def small_raw(city="c", prefix="a"):
    nbs = [square(f"{prefix}{i}", 2 * i, 0, 1, city) for i in range(3)]
    pts = [PointDatum(Modality.STREETVIEW, (0.5, 0.5), features=(1.0, 2.5)),
           PointDatum(Modality.POI, (2.5, 0.5), tokens=("cafe", "bar")),
           PointDatum(Modality.STREETVIEW, (4.5, 0.5), features=(-1e-12, 3.0))]
    rels = [RelationDatum(Modality.MOB, 3.0, origin=(0.5, 0.5), dest=(4.5, 0.5))]
    attrs = AttributeTable([nb.id for nb in nbs], ["attr_1"], np.array([[1.0], [np.nan], [2.0]]))
    return RawData(nbs, pts, rels, attrs)


def test_data_dir_round_trip_is_exact(tmp_path):
    raw = small_raw()
    write_data_dir(raw, tmp_path)
    back = read_data_dir(tmp_path)
    assert back.neighborhoods == raw.neighborhoods
    assert back.points == raw.points
    assert back.relations == raw.relations
    assert np.array_equal(back.attributes.values, raw.attributes.values, equal_nan=True)


def test_id_relations_round_trip(tmp_path):
    rels = [RelationDatum(Modality.MOB, 2.0, src_id="a", dst_id="b"),
            RelationDatum(Modality.DIST, 0.25, src_id="b", dst_id="c", reciprocal=True)]
    write_relations(rels, tmp_path / "r.csv")
    assert read_relations(tmp_path / "r.csv") == rels


def test_bad_files_raise_format_errors(tmp_path):
    with pytest.raises(DataFormatError):
        read_data_dir(tmp_path)
    (tmp_path / "neighborhoods.csv").write_text("id,lon\nx,1\n")
    with pytest.raises(DataFormatError):
        read_data_dir(tmp_path)
    with pytest.raises(DataFormatError):
        RelationDatum(Modality.MOB, -1.0, src_id="a", dst_id="b")


def test_bundle_assigns_points_and_derives_dist(tmp_path):
    bundle, report = build_bundle(small_raw())
    assert bundle.ids == ["a0", "a1", "a2"]
    assert [len(c.streetview_indices) for c in bundle.containers] == [1, 0, 1]
    assert bundle.features.shape == (2, 2)
    assert set(bundle.vocabulary) == {"bar", "cafe"}
    assert report.total_dropped == 0
    assert bundle.graph.weight("MOB", 0, 2) == 3.0
    assert bundle.graph.weight("DIST", 0, 1) > 0


def test_merge_two_cities(tmp_path):
    worlds = [generate(SynthConfig(n_neighborhoods=15, seed=s, city=f"city{s}", center_lon=-87 + 5 * s))
              for s in (0, 1)]
    for w in worlds:
        write_world(w, tmp_path / w.config.city)
    merged = merge_data_dirs([tmp_path / "city0", tmp_path / "city1"], tmp_path / "m")
    assert len(merged.neighborhoods) == 30
    assert merged.neighborhoods[0].id == "city0/n0000" and merged.neighborhoods[15].id == "city1/n0000"
    assert len(merged.points) == sum(len(w.points) for w in worlds)
    assert len(merged.relations) == sum(len(w.relations) for w in worlds)
    assert merged.attributes.ids == [nb.id for nb in merged.neighborhoods]
    bundle, report = build_bundle(read_data_dir(tmp_path / "m"))
    assert report.total_dropped == 0
    cities = city_of(merged.neighborhoods)
    adj = bundle.graph.adjacency("DIST")
    for i in range(30):
        for j in adj.indices[adj.indptr[i]:adj.indptr[i + 1]]:
            assert cities[bundle.ids[i]] == cities[bundle.ids[j]]


def test_merge_one_dir_is_identity_copy(tmp_path):
    write_data_dir(small_raw(), tmp_path / "a")
    merge_data_dirs([tmp_path / "a"], tmp_path / "b")
    for name in ("neighborhoods.csv", "points.csv", "relations.csv", "attributes.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_merge_collision_raises(tmp_path):
    write_data_dir(small_raw(), tmp_path / "a")
    write_data_dir(small_raw(), tmp_path / "b")
    with pytest.raises(GeometryError, match="collision"):
        merge_data_dirs([tmp_path / "a", tmp_path / "b"], tmp_path / "m")
    write_data_dir(small_raw(city="d"), tmp_path / "d")
    merged = merge_data_dirs([tmp_path / "a", tmp_path / "d"], tmp_path / "m2")
    assert len(merged.neighborhoods) == 6


def test_centroid_only_neighborhoods_round_trip(tmp_path):
    nbs = [Neighborhood.from_centroid("x", 1.0, 2.0, "c"), Neighborhood.from_centroid("y", 1.5, 2.0, "c")]
    write_data_dir(RawData(nbs, [], []), tmp_path)
    assert read_data_dir(tmp_path).neighborhoods == nbs
