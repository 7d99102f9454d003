import numpy as np
import pytest

from volsearch.model import Dataset, Organ, SliceRef, TAXONOMY, VolumeRecord


def make_volume(volume_id, organ, num_slices, spacing=1.0):
    modality, region = TAXONOMY[organ]
    return VolumeRecord(
        volume_id=volume_id,
        modality=modality,
        body_region=region,
        organ=organ,
        slice_spacing_mm=spacing,
        num_slices=num_slices,
    )


def make_dataset(vectors_by_volume, organ=Organ.LIVER, spacing=1.0):
    """Dataset from {volume_id: list of vectors}; labels come from the taxonomy."""
    volumes = []
    embeddings = {}
    for vid, vectors in vectors_by_volume.items():
        volumes.append(make_volume(vid, organ, len(vectors), spacing))
        for i, vec in enumerate(vectors):
            embeddings[SliceRef(vid, i)] = np.asarray(vec, dtype=np.float32)
    return Dataset(volumes, embeddings)


def random_dataset(rng, max_volumes=4, max_slices=6, max_dim=8):
    """Random valid dataset; spacings are f32-quantized so files round-trip."""
    dim = int(rng.integers(1, max_dim + 1))
    n_volumes = int(rng.integers(0, max_volumes + 1))
    volumes = []
    embeddings = {}
    for v in range(n_volumes):
        organ = Organ(int(rng.integers(0, 10)))
        num_slices = int(rng.integers(1, max_slices + 1))
        spacing = float(np.float32(rng.uniform(0.5, 5.0)))
        vid = f"vol-{v:03d}"
        volumes.append(make_volume(vid, organ, num_slices, spacing))
        for i in range(num_slices):
            embeddings[SliceRef(vid, i)] = rng.standard_normal(dim).astype(np.float32)
    return Dataset(volumes, embeddings)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
