"""Turn per-slice nearest-neighbor matches into a volume-level answer.

Every sampled query slice contributes its top-1 match's volume id to a
hit table, weighted either uniformly or by a Gaussian centered on the
query volume's middle slice. The winner is the id with the highest
accumulated score; ties fall to the smallest cumulative matched distance,
then to the lexicographically smallest id, so results are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np

from .model import Dataset, Level, SliceRef


class SliceMatch(NamedTuple):
    query_slice: int
    matched: SliceRef
    distance: float


@dataclass(frozen=True)
class WeightingPolicy:
    kind: str = "uniform"  # "uniform" | "gaussian"
    sigma_fraction: float = 1.0 / 6.0  # sigma = fraction * num_query_slices

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown weighting {self.kind!r}; expected uniform or gaussian")
        if not self.sigma_fraction > 0:
            raise ValueError("sigma_fraction must be positive")

    @classmethod
    def parse(cls, token: str) -> "WeightingPolicy":
        text = token.strip().lower()
        name, _, arg = text.partition(":")
        if name == "uniform":
            return cls("uniform")
        if name == "gaussian":
            return cls("gaussian", float(arg)) if arg else cls("gaussian")
        raise ValueError(f"unknown weighting {token!r}; expected uniform or gaussian[:F]")

    def token(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        if self.sigma_fraction == 1.0 / 6.0:
            return "gaussian"
        return f"gaussian:{self.sigma_fraction:g}"

    def weights(self, num_query_slices: int) -> np.ndarray:
        if self.kind == "uniform":
            return np.ones(num_query_slices)
        return gaussian_weights(num_query_slices, self.sigma_fraction)


@dataclass
class HitTable:
    """Accumulated (possibly weighted) hits plus distance sums for tie-breaks."""

    scores: dict[str, float] = field(default_factory=dict)
    cumulative_distance: dict[str, float] = field(default_factory=dict)

    def add(self, volume_id: str, weight: float, distance: float) -> None:
        self.scores[volume_id] = self.scores.get(volume_id, 0.0) + weight
        self.cumulative_distance[volume_id] = (
            self.cumulative_distance.get(volume_id, 0.0) + distance
        )

    def winner(self) -> str:
        return min(
            self.scores,
            key=lambda v: (-self.scores[v], self.cumulative_distance[v], v),
        )


def gaussian_weights(num_query_slices: int, fraction: float = 1.0 / 6.0) -> np.ndarray:
    """w(i) = exp(-(i - c)^2 / (2 sigma^2)), c the center slice, sigma = fraction * n.

    Symmetric about c, strictly decreasing away from it; with the default
    fraction the border slices of a volume get about e^-4.5 of the center
    weight.
    """
    if num_query_slices < 1:
        raise ValueError("num_query_slices must be >= 1")
    if not fraction > 0:
        raise ValueError("fraction must be positive")
    center = (num_query_slices - 1) / 2.0
    sigma = fraction * num_query_slices
    i = np.arange(num_query_slices, dtype=np.float64)
    return np.exp(-((i - center) ** 2) / (2.0 * sigma * sigma))


def match_slices(
    query_volume_embeddings: np.ndarray,
    indices: Sequence[int],
    index,
) -> list[SliceMatch]:
    """Top-1 search for each sampled slice of one query volume."""
    emb = np.asarray(query_volume_embeddings, dtype=np.float32)
    matches = []
    for i in indices:
        if not 0 <= i < emb.shape[0]:
            raise IndexError(f"sampled slice index {i} out of range for {emb.shape[0]} slices")
        hit = index.search(emb[i], 1)[0]
        matches.append(SliceMatch(int(i), hit.ref, hit.distance))
    return matches


def aggregate_with_weights(
    matches: Sequence[SliceMatch], weights: np.ndarray
) -> tuple[str, HitTable]:
    """Fold matches into a hit table using precomputed per-slice weights.

    Accumulation is commutative, so the result is independent of match
    order; scaling all weights by a positive constant never changes the
    winner.
    """
    if not matches:
        raise ValueError("cannot aggregate an empty match list")
    table = HitTable()
    for m in matches:
        table.add(m.matched.volume_id, float(weights[m.query_slice]), m.distance)
    return table.winner(), table


def aggregate(
    matches: Sequence[SliceMatch],
    num_query_slices: int,
    policy: WeightingPolicy = WeightingPolicy(),
) -> tuple[str, HitTable]:
    """Winner volume id plus the full hit table for one query volume."""
    return aggregate_with_weights(matches, policy.weights(num_query_slices))


def slicewise_predictions(
    matches: Sequence[SliceMatch], db: Dataset, level: Level
) -> list[IntEnum]:
    """Per-slice labels of the matched volumes, with no volume aggregation."""
    return [db.volume(m.matched.volume_id).label(level) for m in matches]
