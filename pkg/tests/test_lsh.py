import numpy as np
import pytest

from conftest import make_dataset
from volsearch.exact import DimensionMismatchError, Metric, exact_search
from volsearch.lsh import LshIndex, LshParams, lsh_build
from volsearch.model import Dataset, SliceRef
from volsearch.synth import generate_clusters


def two_cluster_dataset(rng, separation=20.0, dim=16, per_cluster=30):
    a = rng.standard_normal((per_cluster, dim))
    b = rng.standard_normal((per_cluster, dim))
    b[:, 0] += separation
    return make_dataset(
        {"a": [row for row in a.astype(np.float32)], "b": [row for row in b.astype(np.float32)]}
    )


def test_build_deterministic_same_seed(rng):
    ds = two_cluster_dataset(rng)
    i1 = lsh_build(ds, LshParams(num_bits=64, seed=9))
    i2 = lsh_build(ds, LshParams(num_bits=64, seed=9))
    np.testing.assert_array_equal(i1.hyperplanes, i2.hyperplanes)
    np.testing.assert_array_equal(i1._packed, i2._packed)


def test_different_seeds_differ(rng):
    ds = two_cluster_dataset(rng)
    i1 = lsh_build(ds, LshParams(num_bits=64, seed=1))
    i2 = lsh_build(ds, LshParams(num_bits=64, seed=2))
    assert not np.array_equal(i1.hyperplanes, i2.hyperplanes)


def test_single_record_build():
    ds = make_dataset({"v": [[1.0, 2.0]]})
    index = lsh_build(ds, LshParams(num_bits=32, seed=0))
    assert index._packed.shape == (1, 4)
    assert index.signature(0).shape == (32,)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError, match="empty"):
        lsh_build(Dataset([], {}), LshParams())


def test_encode_known_hyperplane():
    ds = make_dataset({"v": [[2.0, 1.0]]})
    index = LshIndex(ds, LshParams(num_bits=1, seed=0), np.array([[1.0, 0.0]], dtype=np.float32))
    np.testing.assert_array_equal(index.encode(np.array([2.0, 1.0])), [1])
    np.testing.assert_array_equal(index.encode(np.array([-2.0, 1.0])), [0])


def test_encode_negation_is_complement(rng):
    ds = two_cluster_dataset(rng, dim=8)
    index = lsh_build(ds, LshParams(num_bits=130, seed=4))  # not a multiple of 8
    for _ in range(10):
        v = rng.standard_normal(8).astype(np.float32)
        bits = index.encode(v)
        flipped = index.encode(-v)
        # sign antisymmetry holds whenever no dot product is exactly zero
        if not np.any(index.hyperplanes @ v == 0.0):
            np.testing.assert_array_equal(flipped, 1 - bits)


def test_zero_vector_all_zero_signature(rng):
    ds = two_cluster_dataset(rng, dim=8)
    index = lsh_build(ds, LshParams(num_bits=64, seed=4))
    np.testing.assert_array_equal(index.encode(np.zeros(8)), np.zeros(64, np.uint8))


def test_stored_vector_hamming_zero(rng):
    ds = two_cluster_dataset(rng)
    index = lsh_build(ds, LshParams(num_bits=256, seed=5))
    q = ds.matrix()[7]
    hits = index.search(q, 1)
    assert hits[0].ref == ds.slice_refs()[7]
    assert hits[0].distance == 0.0  # Hamming distance as a real


def test_dimension_mismatch():
    ds = make_dataset({"v": [[1.0, 2.0]]})
    index = lsh_build(ds, LshParams(num_bits=16, seed=0))
    with pytest.raises(DimensionMismatchError):
        index.encode(np.array([1.0]))
    with pytest.raises(DimensionMismatchError):
        index.search(np.array([1.0, 2.0, 3.0]), 1)


def test_full_rerank_equals_exact(rng):
    ds = two_cluster_dataset(rng, separation=4.0)
    index = lsh_build(ds, LshParams(num_bits=64, seed=3, rerank_depth=ds.num_records))
    for _ in range(10):
        q = rng.standard_normal(ds.dim).astype(np.float32)
        assert index.search(q, 5) == exact_search(ds, Metric.L2, q, 5)


def test_two_clusters_top1_agreement(rng):
    bench = generate_clusters(
        dim=16, num_clusters=2, points_per_cluster=100, num_queries=200, separation=20.0, seed=11
    )
    index = lsh_build(bench.db, LshParams(num_bits=1024, seed=0))
    hits = 0
    for q, c in zip(bench.queries, bench.query_cluster):
        top = index.search(q, 1)[0]
        hits += bench.cluster_of(top.ref.volume_id) == c
    assert hits / len(bench.queries) >= 0.99


def test_angle_law_orthogonal_pairs(rng):
    # Orthogonal pairs should disagree on about half of 4096 bits.
    dim = 32
    ds = make_dataset({"v": [np.ones(dim, np.float32)]})
    index = lsh_build(ds, LshParams(num_bits=4096, seed=123))
    for _ in range(100):
        a = rng.standard_normal(dim)
        b = rng.standard_normal(dim)
        b -= (a @ b) / (a @ a) * a  # exact orthogonalization
        fa = index.encode(a.astype(np.float32))
        fb = index.encode(b.astype(np.float32))
        frac = np.mean(fa != fb)
        assert 0.45 <= frac <= 0.55


def test_recall_monotone_in_bits(rng):
    bench = generate_clusters(
        dim=16, num_clusters=4, points_per_cluster=50, num_queries=100, separation=6.0, seed=2
    )
    recalls = {}
    for bits in (64, 1024):
        index = lsh_build(bench.db, LshParams(num_bits=bits, seed=7))
        agree = 0
        for q in bench.queries:
            truth = exact_search(bench.db, Metric.L2, q, 1)[0].ref
            agree += index.search(q, 1)[0].ref == truth
        recalls[bits] = agree / len(bench.queries)
    assert recalls[1024] >= recalls[64]


def test_save_load_round_trip(tmp_path, rng):
    ds = two_cluster_dataset(rng)
    index = lsh_build(ds, LshParams(num_bits=128, seed=21, rerank_depth=5), Metric.COSINE)
    path = tmp_path / "index.lsh"
    index.save(path)
    assert path.read_bytes()[:4] == b"LSH1"
    loaded = LshIndex.load(path, ds)
    assert loaded.params == index.params
    assert loaded.metric is Metric.COSINE
    q = rng.standard_normal(ds.dim).astype(np.float32)
    assert loaded.search(q, 3) == index.search(q, 3)


def test_load_rejects_wrong_dataset(tmp_path, rng):
    ds = two_cluster_dataset(rng)
    index = lsh_build(ds, LshParams(num_bits=32, seed=0))
    path = tmp_path / "index.lsh"
    index.save(path)
    other = make_dataset({"v": [[1.0, 2.0]]})
    with pytest.raises(ValueError, match="built over"):
        LshIndex.load(path, other)
