"""End-to-end retrieval: sample each query volume, match slices, aggregate votes."""
from __future__ import annotations

import struct
from enum import Enum
from pathlib import Path

from .aggregate import SliceMatch, WeightingPolicy, aggregate, match_slices
from .exact import ExactIndex, Metric
from .hnsw import HnswIndex, HnswParams, hnsw_build
from .lsh import LshIndex, LshParams, lsh_build
from .model import Dataset
from .sampling import SamplingPlan

# An exact "index" persists nothing beyond a reference to the dataset shape.
_EXACT_MAGIC = b"EXA1"
_EXACT_HEAD = struct.Struct("<4sIIBQ")


class IndexKind(Enum):
    EXACT = "exact"
    LSH = "lsh"
    HNSW = "hnsw"

    @classmethod
    def parse(cls, token: str) -> "IndexKind":
        for kind in cls:
            if kind.value == token.strip().lower():
                return kind
        raise ValueError(f"unknown index kind {token!r}; expected exact, lsh, or hnsw")


def build_index(
    kind: IndexKind,
    db: Dataset,
    metric: Metric = Metric.L2,
    lsh_params: LshParams | None = None,
    hnsw_params: HnswParams | None = None,
):
    if kind is IndexKind.EXACT:
        return ExactIndex(db, metric)
    if kind is IndexKind.LSH:
        return lsh_build(db, lsh_params or LshParams(), metric)
    return hnsw_build(db, hnsw_params or HnswParams(), metric)


def save_index(index, path) -> None:
    if isinstance(index, ExactIndex):
        head = _EXACT_HEAD.pack(
            _EXACT_MAGIC, 1, index.dim,
            0 if index.metric is Metric.L2 else 1,
            index.ds.num_records,
        )
        Path(path).write_bytes(head)
    else:
        index.save(path)


def load_index(kind: IndexKind, path, db: Dataset, metric: Metric = Metric.L2):
    if kind is IndexKind.EXACT:
        blob = Path(path).read_bytes()
        if len(blob) != _EXACT_HEAD.size:
            raise ValueError(f"{path}: not an exact index stub")
        magic, version, dim, _, n = _EXACT_HEAD.unpack(blob)
        if magic != _EXACT_MAGIC or version != 1:
            raise ValueError(f"{path}: not an exact index stub")
        if dim != db.dim or n != db.num_records:
            raise ValueError(
                f"{path}: stub references {n} records of dim {dim}, dataset has "
                f"{db.num_records} of dim {db.dim}"
            )
        return ExactIndex(db, metric)
    if kind is IndexKind.LSH:
        return LshIndex.load(path, db)
    return HnswIndex.load(path, db, metric)


def retrieve_volume(
    queries: Dataset,
    volume_id: str,
    index,
    plan: SamplingPlan,
    policy: WeightingPolicy,
) -> tuple[str, list[SliceMatch]]:
    """Predicted database volume id for one query volume."""
    vol = queries.volume(volume_id)
    indices = plan.indices(vol)
    matches = match_slices(queries.volume_matrix(volume_id), indices, index)
    winner, _ = aggregate(matches, vol.num_slices, policy)
    return winner, matches


def retrieve_volumes(
    db: Dataset,
    queries: Dataset,
    index,
    plan: SamplingPlan,
    policy: WeightingPolicy,
) -> list[tuple[str, str]]:
    """(query_volume_id, predicted_volume_id) for every query volume, in order."""
    out = []
    for vol in queries.volumes:
        winner, _ = retrieve_volume(queries, vol.volume_id, index, plan, policy)
        out.append((vol.volume_id, winner))
    return out


def retrieve_slicewise(
    db: Dataset,
    queries: Dataset,
    index,
) -> list[tuple[str, int, str]]:
    """Per-slice top-1 matches over every slice: (query id, slice, matched volume id)."""
    out = []
    for vol in queries.volumes:
        emb = queries.volume_matrix(vol.volume_id)
        matches = match_slices(emb, range(vol.num_slices), index)
        for m in matches:
            out.append((vol.volume_id, m.query_slice, m.matched.volume_id))
    return out
