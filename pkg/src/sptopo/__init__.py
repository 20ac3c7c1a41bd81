"""Topology-aware multi-view graph embedding for spatial transcriptomics clustering."""
from .cluster import ClusterResult, kmeans
from .config import RunConfig, load_config
from .data import PreprocessConfig, SpatialSlice, WeightedGraph, load_slice, preprocess, synth_slice
from .errors import SptopoError
from .metrics import ari, nmi
from .pipeline import TrainConfig, impute, prepare, run, sweep, train
from .topology import TopoConfig, epi_for_all_spots, extended_persistence

__version__ = "0.1.0"

__all__ = [
    "ClusterResult",
    "PreprocessConfig",
    "RunConfig",
    "SpatialSlice",
    "SptopoError",
    "TopoConfig",
    "TrainConfig",
    "WeightedGraph",
    "ari",
    "epi_for_all_spots",
    "extended_persistence",
    "impute",
    "kmeans",
    "load_config",
    "load_slice",
    "nmi",
    "preprocess",
    "prepare",
    "run",
    "sweep",
    "synth_slice",
    "train",
]
