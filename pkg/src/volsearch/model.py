"""Domain types and the fixed organ / body-region / modality taxonomy.

Everything here is immutable after construction and safe to share across
threads. Labels are ground truth for evaluation only; no search step ever
looks at them.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np


class Modality(IntEnum):
    """Imaging technique. Integer values are the frozen wire codes."""

    CT = 0
    MR = 1

    @property
    def label(self) -> str:
        return self.name


class BodyRegion(IntEnum):
    HEAD = 0
    CHEST = 1
    ABDOMEN = 2
    PELVIS = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()


class Organ(IntEnum):
    BRAIN = 0
    COLON = 1
    HEPATIC_VESSELS = 2
    HIPPOCAMPUS = 3
    HEART = 4
    LIVER = 5
    LUNG = 6
    PANCREAS = 7
    PROSTATE = 8
    SPLEEN = 9

    @property
    def label(self) -> str:
        return "".join(part.capitalize() for part in self.name.split("_"))


# Fixed organ -> (modality, body region) mapping; total on the 10 organs.
TAXONOMY: dict[Organ, tuple[Modality, BodyRegion]] = {
    Organ.BRAIN: (Modality.MR, BodyRegion.HEAD),
    Organ.COLON: (Modality.CT, BodyRegion.ABDOMEN),
    Organ.HEPATIC_VESSELS: (Modality.CT, BodyRegion.ABDOMEN),
    Organ.HIPPOCAMPUS: (Modality.MR, BodyRegion.HEAD),
    Organ.HEART: (Modality.MR, BodyRegion.CHEST),
    Organ.LIVER: (Modality.CT, BodyRegion.ABDOMEN),
    Organ.LUNG: (Modality.CT, BodyRegion.CHEST),
    Organ.PANCREAS: (Modality.CT, BodyRegion.ABDOMEN),
    Organ.PROSTATE: (Modality.MR, BodyRegion.PELVIS),
    Organ.SPLEEN: (Modality.CT, BodyRegion.ABDOMEN),
}


def organ_to_body_region(organ: Organ) -> BodyRegion:
    return TAXONOMY[Organ(organ)][1]


def organ_to_modality(organ: Organ) -> Modality:
    return TAXONOMY[Organ(organ)][0]


def parse_organ(token: str) -> Organ:
    """Parse an organ name, tolerating case and -/_ separators."""
    key = token.strip().lower().replace("-", "").replace("_", "")
    for organ in Organ:
        if organ.name.lower().replace("_", "") == key:
            return organ
    raise ValueError(f"unknown organ {token!r}; expected one of "
                     + ", ".join(o.name.lower() for o in Organ))


class Level(Enum):
    """Label granularity at which retrieval answers are scored."""

    MODALITY = "modality"
    BODY_REGION = "region"
    ORGAN = "organ"

    @classmethod
    def parse(cls, token: str) -> "Level":
        for level in cls:
            if level.value == token.strip().lower():
                return level
        raise ValueError(f"unknown level {token!r}; expected modality, region, or organ")

    def classes(self) -> list[IntEnum]:
        if self is Level.MODALITY:
            return list(Modality)
        if self is Level.BODY_REGION:
            return list(BodyRegion)
        return list(Organ)


class SliceRef(NamedTuple):
    """One transversal slice of one volume; the payload of every index hit."""

    volume_id: str
    slice_index: int


@dataclass(frozen=True)
class VolumeRecord:
    volume_id: str
    modality: Modality
    body_region: BodyRegion
    organ: Organ
    slice_spacing_mm: float
    num_slices: int

    def label(self, level: Level) -> IntEnum:
        if level is Level.MODALITY:
            return self.modality
        if level is Level.BODY_REGION:
            return self.body_region
        return self.organ


class UnknownVolumeError(LookupError):
    """Raised when an operation references a volume id not in the dataset."""

    def __init__(self, volume_id: str):
        super().__init__(f"unknown volume id {volume_id!r}")
        self.volume_id = volume_id


class InvalidDatasetError(ValueError):
    """Raised when an operation requires a dataset that fails validation."""

    def __init__(self, violations: list[str]):
        preview = "; ".join(violations[:3])
        more = "" if len(violations) <= 3 else f" (+{len(violations) - 3} more)"
        super().__init__(f"invalid dataset: {preview}{more}")
        self.violations = violations


class Dataset:
    """Labeled volumes plus one float32 embedding per transversal slice.

    Storage order is volume-table order with ascending slice index; that
    order defines record rows everywhere (file layout, index tie-breaks).
    """

    def __init__(
        self,
        volumes: Iterable[VolumeRecord],
        embeddings: Mapping[SliceRef, np.ndarray],
        _matrix: np.ndarray | None = None,
    ):
        self.volumes: list[VolumeRecord] = list(volumes)
        self.embeddings: dict[SliceRef, np.ndarray] = dict(embeddings)
        self._by_id = {v.volume_id: v for v in self.volumes}
        self._matrix = _matrix
        self._refs: list[SliceRef] | None = None

    def __contains__(self, volume_id: str) -> bool:
        return volume_id in self._by_id

    def volume(self, volume_id: str) -> VolumeRecord:
        try:
            return self._by_id[volume_id]
        except KeyError:
            raise UnknownVolumeError(volume_id) from None

    @property
    def num_volumes(self) -> int:
        return len(self.volumes)

    @property
    def num_records(self) -> int:
        return sum(v.num_slices for v in self.volumes)

    @property
    def dim(self) -> int:
        if self._matrix is not None:
            return int(self._matrix.shape[1])
        for vec in self.embeddings.values():
            return int(np.asarray(vec).shape[0])
        return 0

    def slice_refs(self) -> list[SliceRef]:
        """All slice refs in storage order."""
        if self._refs is None:
            self._refs = [
                SliceRef(v.volume_id, i) for v in self.volumes for i in range(v.num_slices)
            ]
        return self._refs

    def iter_volume_refs(self, volume_id: str) -> Iterator[SliceRef]:
        vol = self.volume(volume_id)
        for i in range(vol.num_slices):
            yield SliceRef(volume_id, i)

    def matrix(self) -> np.ndarray:
        """Dense (num_records, dim) float32 matrix in storage order.

        Requires a valid dataset; raises InvalidDatasetError otherwise.
        """
        if self._matrix is None:
            violations = validate_dataset(self)
            if violations:
                raise InvalidDatasetError(violations)
            refs = self.slice_refs()
            mat = np.empty((len(refs), self.dim), dtype=np.float32)
            for row, ref in enumerate(refs):
                mat[row] = self.embeddings[ref]
            self._matrix = mat
        return self._matrix

    def volume_matrix(self, volume_id: str) -> np.ndarray:
        """(num_slices, dim) float32 matrix of one volume's embeddings."""
        refs = list(self.iter_volume_refs(volume_id))
        missing = [r for r in refs if r not in self.embeddings]
        if missing:
            raise InvalidDatasetError(
                [f"volume {r.volume_id!r} slice {r.slice_index}: missing embedding" for r in missing]
            )
        return np.stack([np.asarray(self.embeddings[r], dtype=np.float32) for r in refs])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.volumes != other.volumes:
            return False
        if set(self.embeddings) != set(other.embeddings):
            return False
        return all(
            np.array_equal(
                np.asarray(self.embeddings[r], dtype=np.float32),
                np.asarray(other.embeddings[r], dtype=np.float32),
            )
            for r in self.embeddings
        )

    def __repr__(self) -> str:
        return f"Dataset(volumes={self.num_volumes}, records={self.num_records}, dim={self.dim})"


def validate_dataset(ds: Dataset) -> list[str]:
    """Check every dataset invariant; returns one message per violation.

    An empty list means the dataset is well formed. Violations are data,
    not exceptions: callers that require validity raise InvalidDatasetError.
    """
    violations: list[str] = []
    seen_ids: set[str] = set()
    for vol in ds.volumes:
        if vol.volume_id in seen_ids:
            violations.append(f"volume {vol.volume_id!r}: duplicate volume id")
        seen_ids.add(vol.volume_id)
        if vol.num_slices <= 0:
            violations.append(f"volume {vol.volume_id!r}: num_slices must be positive")
        if not (vol.slice_spacing_mm > 0):
            violations.append(f"volume {vol.volume_id!r}: slice_spacing_mm must be positive")
        want_modality, want_region = TAXONOMY[Organ(vol.organ)]
        if vol.body_region != want_region:
            violations.append(
                f"volume {vol.volume_id!r}: body_region {BodyRegion(vol.body_region).label} "
                f"does not match taxonomy for organ {Organ(vol.organ).label} ({want_region.label})"
            )
        if vol.modality != want_modality:
            violations.append(
                f"volume {vol.volume_id!r}: modality {Modality(vol.modality).label} "
                f"does not match taxonomy for organ {Organ(vol.organ).label} ({want_modality.label})"
            )

    dim: int | None = None
    expected: set[SliceRef] = set()
    for vol in ds.volumes:
        for i in range(max(vol.num_slices, 0)):
            ref = SliceRef(vol.volume_id, i)
            expected.add(ref)
            vec = ds.embeddings.get(ref)
            if vec is None:
                violations.append(f"volume {vol.volume_id!r} slice {i}: missing embedding")
                continue
            arr = np.asarray(vec)
            if arr.ndim != 1 or arr.shape[0] == 0:
                violations.append(
                    f"volume {vol.volume_id!r} slice {i}: embedding must be a non-empty 1-D vector"
                )
                continue
            if dim is None:
                dim = int(arr.shape[0])
            elif int(arr.shape[0]) != dim:
                violations.append(
                    f"volume {vol.volume_id!r} slice {i}: dim {arr.shape[0]} differs from {dim}"
                )
            if not np.all(np.isfinite(arr)):
                violations.append(
                    f"volume {vol.volume_id!r} slice {i}: embedding has non-finite values"
                )

    for ref in ds.embeddings:
        if ref not in expected:
            violations.append(
                f"volume {ref.volume_id!r} slice {ref.slice_index}: embedding does not "
                "correspond to any volume slice"
            )
    return violations
