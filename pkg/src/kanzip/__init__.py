"""kanzip: KAN training, manifold shaping, and codebook compression."""

__version__ = "0.1.0"

from .basis import BasisSpec, evaluate_basis
from .cluster import ClusterConfig, Codebook, assign_points, kmeans_fit
from .codebook import (build_clustered_model, fit_codebooks, memory_report,
                       scalar_compression_factor, vector_compression_factor)
from .layers import KanLayerSpec
from .network import KanModel
from .pipeline import ExperimentConfig, default_config, run_pipeline
from .serialize import load_model, save_model

__all__ = [
    "BasisSpec", "evaluate_basis",
    "ClusterConfig", "Codebook", "assign_points", "kmeans_fit",
    "build_clustered_model", "fit_codebooks", "memory_report",
    "scalar_compression_factor", "vector_compression_factor",
    "KanLayerSpec", "KanModel",
    "ExperimentConfig", "default_config", "run_pipeline",
    "load_model", "save_model",
]
