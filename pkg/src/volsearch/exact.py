"""Brute-force exact k-NN search; the oracle the approximate indexes are judged against."""
from __future__ import annotations

from enum import Enum
from typing import NamedTuple

import numpy as np

from .model import Dataset, SliceRef

# Scan block size: bounds the float64 temporaries on large datasets.
_BLOCK = 65536


class Metric(Enum):
    L2 = "l2"
    COSINE = "cosine"

    @classmethod
    def parse(cls, token: str) -> "Metric":
        for m in cls:
            if m.value == token.strip().lower():
                return m
        raise ValueError(f"unknown metric {token!r}; expected l2 or cosine")


class SearchHit(NamedTuple):
    ref: SliceRef
    distance: float


class DimensionMismatchError(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


def scan_distances(block: np.ndarray, query: np.ndarray, metric: Metric) -> np.ndarray:
    """float64 distances from `query` to every row of `block`.

    Row arithmetic is independent of blocking, so gathered subsets produce
    bit-identical values; every exact distance in the engine goes through
    here (pairwise `distance`, exact search, LSH re-ranking, HNSW output).
    """
    b64 = block.astype(np.float64, copy=False)
    q64 = np.asarray(query, dtype=np.float64)
    if metric is Metric.L2:
        diff = b64 - q64
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    qn = np.sqrt(np.dot(q64, q64))
    if qn == 0.0:
        raise ZeroVectorError("cosine distance is undefined for the zero vector")
    norms = np.sqrt(np.einsum("ij,ij->i", b64, b64))
    if np.any(norms == 0.0):
        raise ZeroVectorError("cosine distance is undefined for the zero vector")
    return 1.0 - np.einsum("ij,j->i", b64, q64) / (norms * qn)


def distance(metric: Metric, a: np.ndarray, b: np.ndarray) -> float:
    """Pairwise distance. L2 in float64; cosine in [0, 2] for non-zero vectors."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if metric is Metric.COSINE and not np.any(a):
        raise ZeroVectorError("cosine distance is undefined for the zero vector")
    return float(scan_distances(b[np.newaxis, :], a, metric)[0])


def as_query(query: np.ndarray, dim: int) -> np.ndarray:
    """Coerce to a float32 query vector, checking the dimension."""
    q = np.asarray(query, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != dim:
        raise DimensionMismatchError(f"query dim {q.shape} does not match dataset dim {dim}")
    return q


class ExactIndex:
    """Linear scan over the dataset matrix, blocked to bound temporaries."""

    kind = "exact"

    def __init__(self, ds: Dataset, metric: Metric = Metric.L2):
        self.ds = ds
        self.metric = metric
        self._matrix = ds.matrix() if ds.num_records else np.empty((0, ds.dim), np.float32)
        self._refs = ds.slice_refs()

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        if k <= 0:
            raise ValueError("k must be positive")
        n = self._matrix.shape[0]
        if n == 0:
            return []
        q = as_query(query, self.dim)
        dists = np.empty(n, dtype=np.float64)
        for start in range(0, n, _BLOCK):
            stop = min(start + _BLOCK, n)
            dists[start:stop] = scan_distances(self._matrix[start:stop], q, self.metric)
        if k < n:
            # argpartition splits distance ties arbitrarily, so gather every
            # row at or below the k-th distance before applying the
            # storage-order tie-break.
            bound = dists[np.argpartition(dists, k - 1)[:k]].max()
            cand = np.flatnonzero(dists <= bound)
            order = cand[np.lexsort((cand, dists[cand]))][:k]
        else:
            order = np.argsort(dists, kind="stable")
        return [SearchHit(self._refs[int(i)], float(dists[int(i)])) for i in order]


def exact_search(ds: Dataset, metric: Metric, query: np.ndarray, k: int) -> list[SearchHit]:
    """The min(k, |ds|) nearest records, ascending, ties by storage order."""
    return ExactIndex(ds, metric).search(query, k)
