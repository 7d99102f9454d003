"""Slice-embedding extraction from pretrained 2D backbones."""

from .extract import export_dataset, extract_volume, read_labels_csv
from .models import (
    MODEL_NAMES,
    Backbone,
    MissingWeightsError,
    ModelSpec,
    load_backbone,
    model_spec,
)
from .preprocess import EmptySliceError, preprocess_slice, preprocess_volume, split_protocols
from .writer import VolumeLabels, write_embv

__version__ = "0.1.0"
