"""Facial action unit estimation by gradient descent through a learned renderer.

Submodules: ``diffcore`` (autodiff), ``facemodel`` (synthetic face oracle),
``generator``, ``extractor``, ``fitter``, ``metrics``, ``pipeline`` and ``cli``.
"""

from . import diffcore
from .config import PipelineConfig
from .errors import (AlignmentError, ConfigError, ContractError, DataError, DegenerateSubspaceError, DimensionError,
                     GENetError, NumericError, UndefinedMetricError, ValidationError)
from .extractor import AttentionConfig, ExtractorModel
from .facemodel import FaceDims, FaceParams
from .fitter import FitReport, LrTable, SubspaceModel, build_subspace, compute_lr_table, fit, transfer
from .generator import GeneratorModel, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "AttentionConfig", "ConfigError", "ContractError", "DataError", "DegenerateSubspaceError",
    "DimensionError", "ExtractorModel", "FaceDims", "FaceParams", "FitReport", "GENetError", "GeneratorModel",
    "LrTable", "NumericError", "PipelineConfig", "SubspaceModel", "TrainConfig", "UndefinedMetricError",
    "ValidationError", "build_subspace", "compute_lr_table", "diffcore", "fit", "transfer",
]
