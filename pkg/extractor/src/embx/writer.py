"""Standalone EMBV dataset writer.

The byte layout is the frozen wire contract with the search engine; this
module implements it independently rather than importing the engine
(little-endian throughout):

    magic "EMBV" | version=1 u32 | dim u32 | n_volumes u32 | n_records u64
    per volume: id_len u16 | id UTF-8 | modality u8 | body_region u8 |
                organ u8 | spacing f32 | num_slices u32
    per record (volume order, slice ascending): dim x f32
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"EMBV"
VERSION = 1

MODALITY_CODES = {"ct": 0, "mr": 1}
REGION_CODES = {"head": 0, "chest": 1, "abdomen": 2, "pelvis": 3}
ORGAN_CODES = {
    "brain": 0,
    "colon": 1,
    "hepatic_vessels": 2,
    "hippocampus": 3,
    "heart": 4,
    "liver": 5,
    "lung": 6,
    "pancreas": 7,
    "prostate": 8,
    "spleen": 9,
}

# organ -> (modality, body region); labels are validated against this.
ORGAN_TAXONOMY = {
    "brain": ("mr", "head"),
    "colon": ("ct", "abdomen"),
    "hepatic_vessels": ("ct", "abdomen"),
    "hippocampus": ("mr", "head"),
    "heart": ("mr", "chest"),
    "liver": ("ct", "abdomen"),
    "lung": ("ct", "chest"),
    "pancreas": ("ct", "abdomen"),
    "prostate": ("mr", "pelvis"),
    "spleen": ("ct", "abdomen"),
}


def normalize_token(token: str) -> str:
    return token.strip().lower().replace("-", "_").replace(" ", "_")


@dataclass(frozen=True)
class VolumeLabels:
    volume_id: str
    modality: str  # "ct" | "mr"
    body_region: str  # "head" | "chest" | "abdomen" | "pelvis"
    organ: str  # one of ORGAN_CODES
    spacing_mm: float

    def __post_init__(self):
        if self.modality not in MODALITY_CODES:
            raise ValueError(f"volume {self.volume_id!r}: unknown modality {self.modality!r}")
        if self.body_region not in REGION_CODES:
            raise ValueError(f"volume {self.volume_id!r}: unknown body region {self.body_region!r}")
        if self.organ not in ORGAN_CODES:
            raise ValueError(f"volume {self.volume_id!r}: unknown organ {self.organ!r}")
        want_modality, want_region = ORGAN_TAXONOMY[self.organ]
        if self.modality != want_modality or self.body_region != want_region:
            raise ValueError(
                f"volume {self.volume_id!r}: organ {self.organ!r} implies "
                f"({want_modality}, {want_region}), got ({self.modality}, {self.body_region})"
            )
        if not self.spacing_mm > 0:
            raise ValueError(f"volume {self.volume_id!r}: spacing must be positive")


def write_embv(path: str | Path, entries: list[tuple[VolumeLabels, np.ndarray]]) -> int:
    """Write (labels, (num_slices, dim) float32 embeddings) pairs; returns bytes written."""
    dim = 0
    n_records = 0
    for labels, emb in entries:
        emb = np.asarray(emb)
        if emb.ndim != 2 or emb.shape[0] == 0:
            raise ValueError(f"volume {labels.volume_id!r}: embeddings must be (num_slices, dim)")
        if dim == 0:
            dim = int(emb.shape[1])
        elif int(emb.shape[1]) != dim:
            raise ValueError(
                f"volume {labels.volume_id!r}: dim {emb.shape[1]} differs from {dim}"
            )
        if not np.all(np.isfinite(emb)):
            raise ValueError(f"volume {labels.volume_id!r}: non-finite embedding values")
        n_records += int(emb.shape[0])

    parts = [struct.pack("<4sIIIQ", MAGIC, VERSION, dim, len(entries), n_records)]
    for labels, emb in entries:
        vid = labels.volume_id.encode("utf-8")
        parts.append(struct.pack("<H", len(vid)))
        parts.append(vid)
        parts.append(
            struct.pack(
                "<BBBfI",
                MODALITY_CODES[labels.modality],
                REGION_CODES[labels.body_region],
                ORGAN_CODES[labels.organ],
                float(labels.spacing_mm),
                int(np.asarray(emb).shape[0]),
            )
        )
    for _, emb in entries:
        parts.append(np.ascontiguousarray(emb, dtype="<f4").tobytes())
    blob = b"".join(parts)
    Path(path).write_bytes(blob)
    return len(blob)
