"""Synthetic labeled embedding datasets with controllable cluster geometry.

Each organ gets one Gaussian cluster whose center sits on its own
coordinate axis, scaled so all pairwise center distances equal
`cluster_separation` times the intra-cluster std. The intra-cluster std
is the per-coordinate std of the per-slice noise (1.0, the sklearn
`cluster_std` convention). A slice embedding is center + per-volume
offset + per-slice noise; the offset spreads matches across several
database volumes of the same organ so hit tables are exercised
nontrivially. A noise fraction replaces slices with tight "background"
vectors far from every organ cluster, shared across modalities, which
reproduces the slice-level modality mismatches seen on real scan
backgrounds.

Generation is single-threaded and draws in a fixed order, so a seed fully
determines the output bytes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, Organ, SliceRef, TAXONOMY, VolumeRecord

# In units of the per-coordinate slice-noise std.
VOLUME_OFFSET_STD = 0.35
BACKGROUND_STD = 0.05


@dataclass(frozen=True)
class SynthSpec:
    dim: int
    organs: tuple[Organ, ...]
    volumes_per_organ: int
    slices_per_volume: tuple[int, int]  # inclusive range
    spacing_mm: tuple[float, float]  # inclusive range
    cluster_separation: float
    noise_fraction: float = 0.0
    seed: int = 0
    query_volumes_per_organ: int | None = None  # defaults to volumes_per_organ

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.organs:
            raise ValueError("need at least one organ")
        if len(set(self.organs)) != len(self.organs):
            raise ValueError("organs must be distinct")
        if self.volumes_per_organ < 1:
            raise ValueError("volumes_per_organ must be >= 1")
        lo, hi = self.slices_per_volume
        if lo < 1 or hi < lo:
            raise ValueError("slices_per_volume range must be non-empty and positive")
        slo, shi = self.spacing_mm
        if not (slo > 0 and shi >= slo):
            raise ValueError("spacing_mm range must be non-empty and positive")
        if not 0 <= self.noise_fraction < 1:
            raise ValueError("noise_fraction must be in [0, 1)")
        if self.cluster_separation < 0:
            raise ValueError("cluster_separation must be >= 0")
        if self.dim < len(self.organs):
            raise ValueError("dim must be >= the number of organs")
        if self.noise_fraction > 0 and self.dim < len(self.organs) + 1:
            raise ValueError("noise_fraction > 0 needs dim >= number of organs + 1")


def _axis_centers(dim: int, count: int, separation: float) -> np.ndarray:
    """count centers with all pairwise distances exactly `separation`."""
    centers = np.zeros((count, dim))
    scale = separation / np.sqrt(2.0)
    for i in range(count):
        centers[i, i] = scale
    return centers


def _make_volume(
    rng: np.random.Generator,
    spec: SynthSpec,
    volume_id: str,
    organ: Organ,
    center: np.ndarray,
    background: np.ndarray,
) -> tuple[VolumeRecord, np.ndarray]:
    lo, hi = spec.slices_per_volume
    num_slices = int(rng.integers(lo, hi + 1))
    # Spacing is stored as f32 on disk; quantize now so files round-trip bit-exactly.
    spacing = float(np.float32(rng.uniform(*spec.spacing_mm)))
    offset = rng.standard_normal(spec.dim) * VOLUME_OFFSET_STD
    slices = center + offset + rng.standard_normal((num_slices, spec.dim))
    if spec.noise_fraction > 0:
        mask = rng.random(num_slices) < spec.noise_fraction
        count = int(mask.sum())
        if count:
            slices[mask] = background + rng.standard_normal((count, spec.dim)) * BACKGROUND_STD
    modality, region = TAXONOMY[organ]
    record = VolumeRecord(
        volume_id=volume_id,
        modality=modality,
        body_region=region,
        organ=organ,
        slice_spacing_mm=spacing,
        num_slices=num_slices,
    )
    return record, slices.astype(np.float32)


def _assemble(volumes: list[VolumeRecord], blocks: list[np.ndarray], dim: int) -> Dataset:
    matrix = (
        np.concatenate(blocks, axis=0) if blocks else np.empty((0, dim), np.float32)
    )
    embeddings: dict[SliceRef, np.ndarray] = {}
    row = 0
    for vol in volumes:
        for i in range(vol.num_slices):
            embeddings[SliceRef(vol.volume_id, i)] = matrix[row]
            row += 1
    return Dataset(volumes, embeddings, _matrix=matrix)


def generate(spec: SynthSpec) -> tuple[Dataset, Dataset]:
    """(database, queries) with disjoint volume ids, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    organs = list(spec.organs)
    centers = _axis_centers(spec.dim, len(organs), spec.cluster_separation)
    background = np.zeros(spec.dim)
    if spec.noise_fraction > 0:
        background[len(organs)] = 3.0 * spec.cluster_separation + 40.0

    def build(prefix: str, per_organ: int) -> Dataset:
        volumes: list[VolumeRecord] = []
        blocks: list[np.ndarray] = []
        for oi, organ in enumerate(organs):
            for v in range(per_organ):
                vid = f"{prefix}-{organ.name.lower()}-{v:03d}"
                record, block = _make_volume(rng, spec, vid, organ, centers[oi], background)
                volumes.append(record)
                blocks.append(block)
        return _assemble(volumes, blocks, spec.dim)

    database = build("db", spec.volumes_per_organ)
    queries = build(
        "q",
        spec.query_volumes_per_organ
        if spec.query_volumes_per_organ is not None
        else spec.volumes_per_organ,
    )
    return database, queries


@dataclass
class ClusterBenchmark:
    """Unlabeled-geometry benchmark for judging index fidelity against the scan."""

    db: Dataset
    queries: np.ndarray  # (num_queries, dim) float32
    query_cluster: np.ndarray  # (num_queries,) int64

    def cluster_of(self, volume_id: str) -> int:
        return int(volume_id.rsplit("-", 1)[1])


def generate_clusters(
    dim: int,
    num_clusters: int,
    points_per_cluster: int,
    num_queries: int,
    separation: float,
    seed: int = 0,
) -> ClusterBenchmark:
    """Gaussian mixture with equidistant centers, one dataset volume per cluster.

    Each cluster's points become the slices of one volume, so the cluster
    of any search hit is recoverable from its volume id ("cluster-NNNN").
    """
    if num_clusters > dim:
        raise ValueError("num_clusters must be <= dim for equidistant centers")
    rng = np.random.default_rng(seed)
    centers = _axis_centers(dim, num_clusters, separation)
    volumes: list[VolumeRecord] = []
    blocks: list[np.ndarray] = []
    for c in range(num_clusters):
        organ = Organ(c % len(Organ))
        modality, region = TAXONOMY[organ]
        volumes.append(
            VolumeRecord(
                volume_id=f"cluster-{c:04d}",
                modality=modality,
                body_region=region,
                organ=organ,
                slice_spacing_mm=1.0,
                num_slices=points_per_cluster,
            )
        )
        blocks.append(
            (centers[c] + rng.standard_normal((points_per_cluster, dim))).astype(np.float32)
        )
    db = _assemble(volumes, blocks, dim)
    query_cluster = rng.integers(0, num_clusters, size=num_queries)
    queries = (
        centers[query_cluster] + rng.standard_normal((num_queries, dim))
    ).astype(np.float32)
    return ClusterBenchmark(db=db, queries=queries, query_cluster=query_cluster.astype(np.int64))
