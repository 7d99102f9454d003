"""Volume -> slice-embedding extraction and dataset export."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch

from .models import Backbone, ModelSpec
from .preprocess import preprocess_volume, split_protocols
from .writer import VolumeLabels, normalize_token, write_embv

BATCH_SIZE = 16


def extract_volume(volume: np.ndarray, backbone: Backbone) -> np.ndarray:
    """One embedding per transversal slice: (z, h, w) -> (z, dim) float32.

    Inference runs in eval mode without gradients, so identical slices
    produce identical vectors.
    """
    batches = preprocess_volume(volume, backbone.spec)
    out = []
    for start in range(0, batches.shape[0], BATCH_SIZE):
        chunk = torch.from_numpy(batches[start : start + BATCH_SIZE])
        out.append(backbone.embed(chunk).numpy().astype(np.float32))
    emb = np.concatenate(out, axis=0)
    if emb.ndim != 2:
        raise RuntimeError(f"backbone returned shape {emb.shape}, expected (slices, dim)")
    return emb


def read_labels_csv(path: str | Path) -> dict[str, VolumeLabels]:
    """CSV with header volume_id,modality,region,organ,spacing_mm."""
    labels: dict[str, VolumeLabels] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"volume_id", "modality", "region", "organ", "spacing_mm"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise ValueError(
                f"{path}: labels CSV needs columns volume_id,modality,region,organ,spacing_mm"
            )
        for row in reader:
            vid = row["volume_id"].strip()
            if vid in labels:
                raise ValueError(f"{path}: duplicate volume id {vid!r}")
            labels[vid] = VolumeLabels(
                volume_id=vid,
                modality=normalize_token(row["modality"]),
                body_region=normalize_token(row["region"]),
                organ=normalize_token(row["organ"]),
                spacing_mm=float(np.float32(row["spacing_mm"])),
            )
    if not labels:
        raise ValueError(f"{path}: no volumes listed")
    return labels


def export_dataset(
    volume_dir: str | Path,
    labels: dict[str, VolumeLabels],
    backbone: Backbone,
    out_path: str | Path,
) -> tuple[int, int]:
    """Extract every labeled .npy volume and write one EMBV dataset.

    Volumes are <volume_id>.npy arrays, (z, h, w) or (protocol, z, h, w);
    4D inputs are split into one exported volume per protocol, suffixed
    "_p0", "_p1", ... Returns (volumes written, bytes written). A sidecar
    <out>.meta.txt records the model identity, embedding dimension, and
    preprocessing constants.
    """
    volume_dir = Path(volume_dir)
    entries: list[tuple[VolumeLabels, np.ndarray]] = []
    for vid in sorted(labels):
        npy = volume_dir / f"{vid}.npy"
        if not npy.exists():
            raise FileNotFoundError(f"missing volume file {npy}")
        raw = np.load(npy)
        parts = split_protocols(raw)
        for p, part in enumerate(parts):
            out_labels = labels[vid]
            if len(parts) > 1:
                out_labels = VolumeLabels(
                    volume_id=f"{vid}_p{p}",
                    modality=out_labels.modality,
                    body_region=out_labels.body_region,
                    organ=out_labels.organ,
                    spacing_mm=out_labels.spacing_mm,
                )
            entries.append((out_labels, extract_volume(part, backbone)))

    n_bytes = write_embv(out_path, entries)
    dim = entries[0][1].shape[1] if entries else 0
    write_sidecar(out_path, backbone.spec, dim)
    return len(entries), n_bytes


def write_sidecar(out_path: str | Path, spec: ModelSpec, dim: int) -> Path:
    side = Path(str(out_path) + ".meta.txt")
    mean = ", ".join(f"{v}" for v in spec.mean)
    std = ", ".join(f"{v}" for v in spec.std)
    side.write_text(
        f"model = {spec.name}\n"
        f"embedding_dim = {dim}\n"
        f"input_size = {spec.input_size}x{spec.input_size}\n"
        f"normalization_mean = ({mean})\n"
        f"normalization_std = ({std})\n"
    )
    return side
