"""Backdoored-network detection by density modeling of clean layer weights."""

from .detector import (
    DetectorModel,
    NetworkScore,
    RocResult,
    calibrate_threshold,
    evaluate,
    fit_detector,
    load_detector,
    roc_from_scores,
    save_detector,
    score_network,
)
from .gmm import GmmModel, aic, fit_gmm, log_density, sweep_components
from .pca import PcaModel, fit_pca, project
from .vectorize import FeatureVectorSet, Interpretation, stack_corpus, vectorize_conv, vectorize_matrix
from .weightstore import NetworkRecord, WeightTensor, read_container, select_layer, write_container

__version__ = "0.1.0"

__all__ = [
    "DetectorModel",
    "FeatureVectorSet",
    "GmmModel",
    "Interpretation",
    "NetworkRecord",
    "NetworkScore",
    "PcaModel",
    "RocResult",
    "WeightTensor",
    "aic",
    "calibrate_threshold",
    "evaluate",
    "fit_detector",
    "fit_gmm",
    "fit_pca",
    "load_detector",
    "log_density",
    "project",
    "read_container",
    "roc_from_scores",
    "save_detector",
    "score_network",
    "select_layer",
    "stack_corpus",
    "sweep_components",
    "vectorize_conv",
    "vectorize_matrix",
    "write_container",
]
