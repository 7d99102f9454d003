"""Slice preprocessing: min-max scale, bilinear resize, channel replication, normalize."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .models import ModelSpec


class EmptySliceError(ValueError):
    pass


def preprocess_slice(raw: np.ndarray, model: ModelSpec) -> np.ndarray:
    """One 2D slice -> (3, 224, 224) float32 tensor ready for the backbone.

    Intensities are min-max scaled to [0, 1] per slice (constant slices map
    to all zeros), resized bilinearly, replicated along the channel axis,
    then normalized with the model's mean/std.
    """
    arr = np.asarray(raw, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptySliceError(f"expected a non-empty 2D slice, got shape {arr.shape}")
    lo = float(arr.min())
    hi = float(arr.max())
    if hi > lo:
        scaled = (arr - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(arr)

    tensor = torch.from_numpy(scaled)[None, None]
    size = (model.input_size, model.input_size)
    if tensor.shape[-2:] != size:
        tensor = F.interpolate(tensor, size=size, mode="bilinear", align_corners=False)
    tensor = tensor.repeat(1, 3, 1, 1)[0]

    mean = torch.tensor(model.mean).view(3, 1, 1)
    std = torch.tensor(model.std).view(3, 1, 1)
    return ((tensor - mean) / std).numpy()


def preprocess_volume(volume: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Stack preprocess_slice over the transversal axis: (z, h, w) -> (z, 3, 224, 224)."""
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise ValueError(f"expected a 3D volume (z, h, w), got shape {vol.shape}")
    return np.stack([preprocess_slice(vol[i], model) for i in range(vol.shape[0])])


def split_protocols(volume: np.ndarray) -> list[np.ndarray]:
    """4D (protocol, z, h, w) inputs become one 3D volume per protocol."""
    vol = np.asarray(volume)
    if vol.ndim == 3:
        return [vol]
    if vol.ndim == 4:
        return [vol[p] for p in range(vol.shape[0])]
    raise ValueError(f"expected a 3D or 4D volume, got shape {vol.shape}")
