import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m3g.encoders import (
    EmbeddingTable,
    FeatureEncoder,
    coverage,
    encode_feature,
    encode_word,
    export_embeddings,
    init_embeddings,
    init_feature_encoder,
    init_word_encoder,
    load_pretrained_words,
    read_embeddings,
)
from m3g.errors import DataFormatError, DimensionError, VocabularyError
from m3g.samplers import build_vocabulary
from oracles import matvec


def test_init_is_deterministic_and_bounded():
    a, b = init_embeddings(3, 2, seed=7), init_embeddings(3, 2, seed=7)
    assert np.array_equal(a.matrix, b.matrix)
    big = init_embeddings(1000, 1000, seed=1, scale=0.1).matrix
    assert np.abs(big).max() <= 0.1
    # mean of 1e6 uniform(-0.1, 0.1) draws: sd of the mean is (0.1/sqrt 3)/1e3
    assert abs(big.mean()) <= 3 * (0.1 / np.sqrt(3)) / 1e3
    assert not np.array_equal(init_embeddings(3, 2, seed=8).matrix, a.matrix)


def test_init_rejects_bad_dims():
    with pytest.raises(DimensionError):
        init_embeddings(0, 2)
    with pytest.raises(DimensionError):
        init_feature_encoder(3, 0)


def test_encode_feature_basics(rng):
    b = rng.normal(size=4)
    enc = FeatureEncoder(np.zeros((4, 3)), b)
    assert np.array_equal(encode_feature(enc, rng.normal(size=3)), b)
    eye = FeatureEncoder(np.eye(5), np.zeros(5))
    x = rng.normal(size=5)
    assert np.array_equal(encode_feature(eye, x), x)
    with pytest.raises(DimensionError):
        encode_feature(eye, np.zeros(4))


def test_encode_feature_matches_loop_oracle(rng):
    enc = FeatureEncoder(rng.normal(size=(7, 11)), rng.normal(size=7))
    x = rng.normal(size=11)
    want = np.array(matvec(enc.weight.tolist(), x.tolist())) + enc.bias
    assert np.max(np.abs(encode_feature(enc, x) - want)) <= 1e-12


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31 - 1))
@settings(max_examples=100, deadline=None)
def test_encode_feature_is_affine(alpha, beta, seed):
    r = np.random.default_rng(seed)
    enc = FeatureEncoder(r.normal(size=(6, 4)), r.normal(size=6))
    x, y = r.normal(size=4), r.normal(size=4)
    lhs = encode_feature(enc, alpha * x + beta * y)
    rhs = alpha * encode_feature(enc, x) + beta * encode_feature(enc, y) - (alpha + beta - 1) * enc.bias
    assert np.allclose(lhs, rhs, atol=1e-10, rtol=0)


def test_large_finite_inputs_stay_finite(rng):
    enc = init_feature_encoder(32, 200, seed=0)
    assert np.isfinite(encode_feature(enc, rng.uniform(-1e6, 1e6, size=(10, 32)))).all()


def test_word_lookup_and_independence():
    enc = init_word_encoder({"cafe": 0, "bar": 1}, d=4, seed=0)
    assert np.array_equal(encode_word(enc, "bar"), enc.matrix[1])
    before = enc.matrix[1].copy()
    enc.matrix[0] += 1.0
    assert np.array_equal(encode_word(enc, "bar"), before)
    with pytest.raises(VocabularyError):
        encode_word(enc, "zoo")


def test_synthetic_vocabulary_has_full_coverage(world_bundle):
    bundle, _ = world_bundle
    enc = init_word_encoder(build_vocabulary(bundle.containers), d=8)
    assert coverage(enc, (t for c in bundle.containers for t in c.poi_tokens)) == 0


def test_pretrained_words(tmp_path):
    f = tmp_path / "vec.txt"
    f.write_text("cafe 1 0 0\nbar 0.5 -2 3.25\nunused 9 9 9\n")
    enc = load_pretrained_words(f, 3, {"bar": 0, "cafe": 1, "park": 2}, seed=1)
    assert encode_word(enc, "cafe").tolist() == [1.0, 0.0, 0.0]
    assert encode_word(enc, "bar").tolist() == [0.5, -2.0, 3.25]
    assert (enc.loaded, enc.random_init) == (2, 1)
    assert np.abs(encode_word(enc, "park")).max() <= 0.1

    empty = tmp_path / "empty.txt"
    empty.write_text("")
    enc = load_pretrained_words(empty, 3, {"a": 0, "b": 1})
    assert (enc.loaded, enc.random_init) == (0, 2)

    bad = tmp_path / "bad.txt"
    bad.write_text("cafe 1 2\n")
    with pytest.raises(DataFormatError):
        load_pretrained_words(bad, 3, {"cafe": 0})
    bad.write_text("cafe 1 x 2\n")
    with pytest.raises(DataFormatError):
        load_pretrained_words(bad, 3, {"cafe": 0})


def test_embedding_csv_round_trip_is_exact(tmp_path, rng):
    t = EmbeddingTable(["a", "b/c"], rng.normal(size=(2, 5)) * 1e-7)
    export_embeddings(t, tmp_path / "e.csv")
    header = (tmp_path / "e.csv").read_text().splitlines()[0]
    assert header == "id,z_0,z_1,z_2,z_3,z_4"
    back = read_embeddings(tmp_path / "e.csv")
    assert back.ids == t.ids and np.array_equal(back.matrix, t.matrix)
