"""Random-hyperplane LSH: Hamming ranking over sign signatures, optional exact re-rank.

Each record gets a num_bits signature; bit i is 1 iff hyperplane_i . v > 0
(exactly-zero dot products encode 0). For random unit hyperplanes the
expected fraction of differing bits between two vectors approaches
angle / pi, so Hamming distance ranks candidates by angular similarity.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exact import DimensionMismatchError, Metric, SearchHit, as_query, scan_distances
from .model import Dataset

MAGIC = b"LSH1"
VERSION = 1


@dataclass(frozen=True)
class LshParams:
    num_bits: int = 1024
    seed: int = 0
    rerank_depth: int = 0  # 0 ranks purely by Hamming distance

    def __post_init__(self):
        if self.num_bits < 1:
            raise ValueError("num_bits must be >= 1")
        if self.rerank_depth < 0:
            raise ValueError("rerank_depth must be >= 0")


def _unit_hyperplanes(num_bits: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    planes = rng.standard_normal((num_bits, dim))
    planes /= np.linalg.norm(planes, axis=1, keepdims=True)
    return planes.astype(np.float32)


class LshIndex:
    """Immutable after build; searches are read-only and thread-safe."""

    kind = "lsh"

    def __init__(
        self,
        ds: Dataset,
        params: LshParams,
        hyperplanes: np.ndarray,
        metric: Metric = Metric.L2,
        _packed: np.ndarray | None = None,
    ):
        if ds.num_records == 0:
            raise ValueError("cannot build an LSH index over an empty dataset")
        self.ds = ds
        self.params = params
        self.metric = metric
        self.hyperplanes = np.asarray(hyperplanes, dtype=np.float32)
        if self.hyperplanes.shape != (params.num_bits, ds.dim):
            raise DimensionMismatchError(
                f"hyperplanes shape {self.hyperplanes.shape} does not match "
                f"(num_bits={params.num_bits}, dim={ds.dim})"
            )
        self._matrix = ds.matrix()
        self._refs = ds.slice_refs()
        if _packed is None:
            _packed = self._pack_rows(self._matrix)
        self._packed = _packed  # (n_records, ceil(num_bits / 8)) uint8

    @property
    def dim(self) -> int:
        return int(self._matrix.shape[1])

    @property
    def num_records(self) -> int:
        return int(self._packed.shape[0])

    def _pack_rows(self, rows: np.ndarray) -> np.ndarray:
        dots = rows @ self.hyperplanes.T
        return np.packbits(dots > 0, axis=1)

    def encode(self, v: np.ndarray) -> np.ndarray:
        """Signature of one vector as a (num_bits,) array of 0/1."""
        q = as_query(v, self.dim)
        dots = self.hyperplanes @ q
        return (dots > 0).astype(np.uint8)

    def signature(self, row: int) -> np.ndarray:
        """Stored signature of record `row`, unpacked to 0/1."""
        return np.unpackbits(self._packed[row])[: self.params.num_bits]

    def hamming_to_all(self, v: np.ndarray) -> np.ndarray:
        """Hamming distance from v's signature to every stored signature."""
        packed = np.packbits(self.encode(v))
        return np.bitwise_count(self._packed ^ packed).sum(axis=1, dtype=np.int64)

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        if k <= 0:
            raise ValueError("k must be positive")
        ham = self.hamming_to_all(query)
        order = np.argsort(ham, kind="stable")  # ties fall back to storage order
        depth = self.params.rerank_depth
        if depth == 0:
            top = order[:k]
            return [SearchHit(self._refs[int(i)], float(ham[int(i)])) for i in top]
        cand = order[: max(k, depth)]
        q = as_query(query, self.dim)
        dists = scan_distances(self._matrix[cand], q, self.metric)
        reorder = np.lexsort((cand, dists))[:k]
        return [SearchHit(self._refs[int(cand[i])], float(dists[i])) for i in reorder]

    def save(self, path: str | Path) -> None:
        head = struct.pack(
            "<4sIIIqIBQ",
            MAGIC,
            VERSION,
            self.dim,
            self.params.num_bits,
            self.params.seed,
            self.params.rerank_depth,
            0 if self.metric is Metric.L2 else 1,
            self.num_records,
        )
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(np.ascontiguousarray(self.hyperplanes, dtype="<f4").tobytes())
            fh.write(self._packed.tobytes())

    @classmethod
    def load(cls, path: str | Path, ds: Dataset) -> "LshIndex":
        blob = Path(path).read_bytes()
        head = struct.Struct("<4sIIIqIBQ")
        if len(blob) < head.size:
            raise ValueError(f"{path}: truncated LSH index file")
        magic, version, dim, num_bits, seed, rerank, metric_code, n = head.unpack_from(blob)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported LSH index version {version}")
        if dim != ds.dim or n != ds.num_records:
            raise ValueError(
                f"{path}: index was built over {n} records of dim {dim}, dataset has "
                f"{ds.num_records} of dim {ds.dim}"
            )
        off = head.size
        planes = np.frombuffer(blob, dtype="<f4", count=num_bits * dim, offset=off)
        off += num_bits * dim * 4
        nbytes = (num_bits + 7) // 8
        packed = np.frombuffer(blob, dtype=np.uint8, count=n * nbytes, offset=off)
        if off + n * nbytes != len(blob):
            raise ValueError(f"{path}: unexpected file length")
        params = LshParams(num_bits=num_bits, seed=seed, rerank_depth=rerank)
        metric = Metric.L2 if metric_code == 0 else Metric.COSINE
        return cls(
            ds,
            params,
            planes.reshape(num_bits, dim).copy(),
            metric,
            _packed=packed.reshape(n, nbytes).copy(),
        )


def lsh_build(ds: Dataset, params: LshParams, metric: Metric = Metric.L2) -> LshIndex:
    """Draw seeded unit hyperplanes and sign-encode every record."""
    if ds.num_records == 0:
        raise ValueError("cannot build an LSH index over an empty dataset")
    planes = _unit_hyperplanes(params.num_bits, ds.dim, params.seed)
    return LshIndex(ds, params, planes, metric)
