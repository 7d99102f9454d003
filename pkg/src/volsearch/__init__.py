"""Slice-embedding vector search and volume-level retrieval for 3D medical images."""

from .aggregate import (
    HitTable,
    SliceMatch,
    WeightingPolicy,
    aggregate,
    gaussian_weights,
    match_slices,
    slicewise_predictions,
)
from .evaluate import EvalReport, evaluate, evaluate_slicewise, summarize_across_configs
from .exact import ExactIndex, Metric, SearchHit, distance, exact_search
from .hnsw import HnswIndex, HnswParams, hnsw_build
from .interchange import read_dataset, write_dataset
from .lsh import LshIndex, LshParams, lsh_build
from .model import (
    BodyRegion,
    Dataset,
    Level,
    Modality,
    Organ,
    SliceRef,
    TAXONOMY,
    VolumeRecord,
    organ_to_body_region,
    organ_to_modality,
    validate_dataset,
)
from .sampling import SamplingPlan, sample_equidistant_mm, sample_fixed_step, sample_random
from .synth import SynthSpec, generate, generate_clusters

__version__ = "0.1.0"

__all__ = [
    "BodyRegion",
    "Dataset",
    "EvalReport",
    "ExactIndex",
    "HitTable",
    "HnswIndex",
    "HnswParams",
    "Level",
    "LshIndex",
    "LshParams",
    "Metric",
    "Modality",
    "Organ",
    "SamplingPlan",
    "SearchHit",
    "SliceMatch",
    "SliceRef",
    "SynthSpec",
    "TAXONOMY",
    "VolumeRecord",
    "WeightingPolicy",
    "aggregate",
    "distance",
    "evaluate",
    "evaluate_slicewise",
    "exact_search",
    "gaussian_weights",
    "generate",
    "generate_clusters",
    "hnsw_build",
    "lsh_build",
    "match_slices",
    "organ_to_body_region",
    "organ_to_modality",
    "read_dataset",
    "sample_equidistant_mm",
    "sample_fixed_step",
    "sample_random",
    "slicewise_predictions",
    "summarize_across_configs",
    "validate_dataset",
    "write_dataset",
]
