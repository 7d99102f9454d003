import numpy as np
import pytest

from conftest import make_dataset, random_dataset
from volsearch.exact import (
    DimensionMismatchError,
    ExactIndex,
    Metric,
    ZeroVectorError,
    distance,
    exact_search,
)
from volsearch.model import Dataset, SliceRef


def test_l2_three_four_five():
    assert distance(Metric.L2, np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 5.0


def test_cosine_orthogonal():
    assert distance(Metric.COSINE, np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0


def test_cosine_scale_invariance():
    v = np.array([0.3, -1.7, 2.2], dtype=np.float32)
    assert distance(Metric.COSINE, v, 2 * v) == pytest.approx(0.0, abs=1e-12)


def test_distance_symmetric_and_self_zero(rng):
    for _ in range(20):
        a = rng.standard_normal(5).astype(np.float32)
        b = rng.standard_normal(5).astype(np.float32)
        assert distance(Metric.L2, a, b) == distance(Metric.L2, b, a)
        assert distance(Metric.L2, a, a) == 0.0
        c = distance(Metric.COSINE, a, b)
        assert c == pytest.approx(distance(Metric.COSINE, b, a), abs=1e-12)
        assert 0.0 <= c <= 2.0


def test_distance_errors():
    with pytest.raises(DimensionMismatchError):
        distance(Metric.L2, np.zeros(2), np.zeros(3))
    with pytest.raises(ZeroVectorError):
        distance(Metric.COSINE, np.zeros(2), np.ones(2))
    with pytest.raises(ZeroVectorError):
        distance(Metric.COSINE, np.ones(2), np.zeros(2))


def test_exact_search_1d_example():
    ds = make_dataset({"v": [[1.0], [2.0], [3.0]]})
    hits = exact_search(ds, Metric.L2, np.array([0.0]), 1)
    assert len(hits) == 1
    assert hits[0].ref == SliceRef("v", 0)
    assert hits[0].distance == 1.0


def test_exact_search_stored_vector_first():
    ds = make_dataset({"v": [[1.0, 1.0], [2.0, 0.5], [0.1, 0.2]]})
    hits = exact_search(ds, Metric.L2, ds.matrix()[1], 2)
    assert hits[0] == (SliceRef("v", 1), 0.0)


def test_exact_search_k_clamped():
    ds = make_dataset({"v": [[1.0], [2.0], [3.0]]})
    hits = exact_search(ds, Metric.L2, np.array([0.0]), 10)
    assert [h.ref.slice_index for h in hits] == [0, 1, 2]


def test_exact_search_empty_dataset():
    assert exact_search(Dataset([], {}), Metric.L2, np.array([]), 3) == []


def test_exact_search_invalid_k():
    ds = make_dataset({"v": [[1.0]]})
    with pytest.raises(ValueError):
        exact_search(ds, Metric.L2, np.array([0.0]), 0)


def test_tie_break_by_storage_order():
    # Two identical vectors: the earlier row must win.
    ds = make_dataset({"a": [[1.0, 0.0]], "b": [[1.0, 0.0]]})
    hits = exact_search(ds, Metric.L2, np.array([1.0, 0.0]), 2)
    assert [h.ref.volume_id for h in hits] == ["a", "b"]


def test_prefix_of_full_sorted_permutation(rng):
    for _ in range(30):
        ds = random_dataset(rng, max_volumes=3, max_slices=4, max_dim=4)
        if ds.num_records == 0:
            continue
        q = rng.standard_normal(ds.dim).astype(np.float32)
        refs = ds.slice_refs()
        full = sorted(
            range(ds.num_records),
            key=lambda i: (distance(Metric.L2, q, ds.matrix()[i]), i),
        )
        for k in (1, 2, ds.num_records + 3):
            hits = exact_search(ds, Metric.L2, q, k)
            assert [h.ref for h in hits] == [refs[i] for i in full[: min(k, len(full))]]


def test_search_matches_pairwise_distance(rng):
    ds = random_dataset(rng, max_volumes=3, max_slices=5, max_dim=6)
    while ds.num_records == 0:
        ds = random_dataset(rng, max_volumes=3, max_slices=5, max_dim=6)
    q = rng.standard_normal(ds.dim).astype(np.float32)
    for metric in Metric:
        hits = exact_search(ds, metric, q, ds.num_records)
        for hit in hits:
            assert hit.distance == distance(metric, q, ds.embeddings[hit.ref])


def test_deterministic_across_runs(rng):
    ds = random_dataset(rng, max_volumes=4, max_slices=6, max_dim=8)
    while ds.num_records < 5:
        ds = random_dataset(rng, max_volumes=4, max_slices=6, max_dim=8)
    q = rng.standard_normal(ds.dim).astype(np.float32)
    a = ExactIndex(ds, Metric.L2).search(q, 4)
    b = ExactIndex(ds, Metric.L2).search(q, 4)
    assert a == b


def test_query_dimension_mismatch():
    ds = make_dataset({"v": [[1.0, 2.0]]})
    with pytest.raises(DimensionMismatchError):
        exact_search(ds, Metric.L2, np.array([1.0]), 1)
