"""Binary "EMBV" dataset files: the wire contract between extractors and the engine.

Layout (all integers little-endian):

    magic "EMBV" (4B) | version u32 | dim u32 | n_volumes u32 | n_records u64
    per volume:  id_len u16 | id UTF-8 | modality u8 | body_region u8 |
                 organ u8 | spacing f32 | num_slices u32
    per record (volume-table order, slice index ascending): dim x f32

n_records must equal the sum of num_slices over the volume table. Writing
the same dataset twice yields identical bytes; round-trips are bit-exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import (
    BodyRegion,
    Dataset,
    InvalidDatasetError,
    Modality,
    Organ,
    SliceRef,
    VolumeRecord,
    validate_dataset,
)

MAGIC = b"EMBV"
VERSION = 1

_HEADER = struct.Struct("<4sIIIQ")
_VOLUME_FIXED = struct.Struct("<BBBfI")


class InterchangeError(ValueError):
    """Base class for malformed dataset files."""


class BadMagicError(InterchangeError):
    pass


class BadVersionError(InterchangeError):
    pass


class TruncatedFileError(InterchangeError):
    pass


class RecordCountError(InterchangeError):
    pass


def write_dataset(ds: Dataset, path: str | Path) -> int:
    """Write a validated dataset; returns the number of bytes written."""
    violations = validate_dataset(ds)
    if violations:
        raise InvalidDatasetError(violations)

    n_records = ds.num_records
    parts = [_HEADER.pack(MAGIC, VERSION, ds.dim, ds.num_volumes, n_records)]
    for vol in ds.volumes:
        vid = vol.volume_id.encode("utf-8")
        if len(vid) > 0xFFFF:
            raise InterchangeError(f"volume id too long ({len(vid)} bytes)")
        parts.append(struct.pack("<H", len(vid)))
        parts.append(vid)
        parts.append(
            _VOLUME_FIXED.pack(
                int(vol.modality),
                int(vol.body_region),
                int(vol.organ),
                float(vol.slice_spacing_mm),
                int(vol.num_slices),
            )
        )
    for vol in ds.volumes:
        for i in range(vol.num_slices):
            vec = np.ascontiguousarray(ds.embeddings[SliceRef(vol.volume_id, i)], dtype="<f4")
            parts.append(vec.tobytes())

    blob = b"".join(parts)
    Path(path).write_bytes(blob)
    return len(blob)


def read_dataset(path: str | Path) -> Dataset:
    """Read an EMBV file back into a dataset, bit-exactly."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, dim, n_volumes, n_records = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}, expected {VERSION}")

    off = _HEADER.size
    volumes: list[VolumeRecord] = []
    for _ in range(n_volumes):
        if off + 2 > len(blob):
            raise TruncatedFileError(f"{path}: truncated inside the volume table")
        (id_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        if off + id_len + _VOLUME_FIXED.size > len(blob):
            raise TruncatedFileError(f"{path}: truncated inside the volume table")
        volume_id = blob[off : off + id_len].decode("utf-8")
        off += id_len
        modality, body_region, organ, spacing, num_slices = _VOLUME_FIXED.unpack_from(blob, off)
        off += _VOLUME_FIXED.size
        try:
            volumes.append(
                VolumeRecord(
                    volume_id=volume_id,
                    modality=Modality(modality),
                    body_region=BodyRegion(body_region),
                    organ=Organ(organ),
                    slice_spacing_mm=spacing,
                    num_slices=num_slices,
                )
            )
        except ValueError as exc:
            raise InterchangeError(f"{path}: volume {volume_id!r}: {exc}") from None

    declared = sum(v.num_slices for v in volumes)
    if declared != n_records:
        raise RecordCountError(
            f"{path}: header claims {n_records} records but the volume table sums to {declared}"
        )

    payload = n_records * dim * 4
    if len(blob) - off < payload:
        raise TruncatedFileError(
            f"{path}: expected {payload} bytes of embeddings, found {len(blob) - off}"
        )
    if len(blob) - off > payload:
        raise InterchangeError(f"{path}: {len(blob) - off - payload} trailing bytes after records")

    flat = np.frombuffer(blob, dtype="<f4", count=n_records * dim, offset=off)
    matrix = flat.reshape(n_records, dim).copy() if n_records else np.empty((0, dim), np.float32)

    embeddings: dict[SliceRef, np.ndarray] = {}
    row = 0
    for vol in volumes:
        for i in range(vol.num_slices):
            embeddings[SliceRef(vol.volume_id, i)] = matrix[row]
            row += 1
    return Dataset(volumes, embeddings, _matrix=matrix)
