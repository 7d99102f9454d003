"""Slice-subset selection: all slices, random-n, fixed physical gap, fixed index step.

All samplers anchor at slice 0 and return sorted, distinct, in-range
indices, so every plan's output is a subset of the full slice list.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import VolumeRecord

SAMPLING_TOKENS = "all | random:N | mm:G | step:S | slicewise"


class PlanKind(Enum):
    ALL = "all"
    RANDOM = "random"
    EQUIDISTANT_MM = "mm"
    FIXED_STEP = "step"


def sample_random(num_slices: int, n: int, seed: int) -> list[int]:
    """n distinct indices drawn uniformly without replacement, ascending.

    Clamps to every index when n >= num_slices.
    """
    if num_slices < 1:
        raise ValueError("num_slices must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= num_slices:
        return list(range(num_slices))
    rng = np.random.default_rng(seed)
    picks = rng.choice(num_slices, size=n, replace=False)
    return sorted(int(i) for i in picks)


def sample_equidistant_mm(num_slices: int, spacing_mm: float, gap_mm: float) -> list[int]:
    """Indices spaced by round(gap / spacing) slices, at least 1, from 0."""
    if not spacing_mm > 0:
        raise ValueError("spacing_mm must be positive")
    if not gap_mm > 0:
        raise ValueError("gap_mm must be positive")
    # Round half away from zero; the ratio is always positive here.
    step = max(1, int(math.floor(gap_mm / spacing_mm + 0.5)))
    return list(range(0, num_slices, step))


def sample_fixed_step(num_slices: int, step: int) -> list[int]:
    """Every step-th index regardless of physical spacing."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return list(range(0, num_slices, step))


def _volume_seed(seed: int, volume_id: str) -> int:
    """Stable per-volume stream so equal-length volumes do not share draws."""
    crc = zlib.crc32(volume_id.encode("utf-8"))
    return (seed * 6364136223846793005 + crc * 1442695040888963407 + 1) % (1 << 64)


@dataclass(frozen=True)
class SamplingPlan:
    kind: PlanKind
    value: float = 0.0  # n for random, gap mm, or step
    seed: int = 0

    @classmethod
    def parse(cls, token: str, seed: int = 0) -> "SamplingPlan":
        text = token.strip().lower()
        if text == "all":
            return cls(PlanKind.ALL, seed=seed)
        name, _, arg = text.partition(":")
        try:
            if name == "random":
                n = int(arg)
                if n < 1:
                    raise ValueError
                return cls(PlanKind.RANDOM, float(n), seed)
            if name == "mm":
                gap = float(arg)
                if not gap > 0:
                    raise ValueError
                return cls(PlanKind.EQUIDISTANT_MM, gap, seed)
            if name == "step":
                step = int(arg)
                if step < 1:
                    raise ValueError
                return cls(PlanKind.FIXED_STEP, float(step), seed)
        except ValueError:
            pass
        raise ValueError(f"unknown sampling token {token!r}; expected {SAMPLING_TOKENS}")

    def token(self) -> str:
        if self.kind is PlanKind.ALL:
            return "all"
        if self.kind is PlanKind.RANDOM:
            return f"random:{int(self.value)}"
        if self.kind is PlanKind.EQUIDISTANT_MM:
            gap = self.value
            return f"mm:{int(gap)}" if gap == int(gap) else f"mm:{gap:g}"
        return f"step:{int(self.value)}"

    def indices(self, volume: VolumeRecord) -> list[int]:
        if self.kind is PlanKind.ALL:
            return list(range(volume.num_slices))
        if self.kind is PlanKind.RANDOM:
            return sample_random(
                volume.num_slices, int(self.value), _volume_seed(self.seed, volume.volume_id)
            )
        if self.kind is PlanKind.EQUIDISTANT_MM:
            return sample_equidistant_mm(volume.num_slices, volume.slice_spacing_mm, self.value)
        return sample_fixed_step(volume.num_slices, int(self.value))
