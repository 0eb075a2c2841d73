"""Late fusion of elevation-blind radar with camera images for sparse depth.

Radar returns are projected at the horizon row, expanded upward into
candidate pixels, and filtered by a learned image-depth consistency score.
"""
from .completion import DepthCompleter, complete_depth
from .config import ConfigError, RunConfig, load_config, parse_config
from .data import FusionSample
from .evaluator import ConsistencyEvaluator, class_weights, weighted_bce_loss
from .features import ExtractorInput, FeatureExtractor, extract_features
from .geometry import (
    CameraIntrinsics,
    CameraPoint3D,
    RadarReturn,
    compute_expansion_pixels,
    project_point,
    project_radar_horizontal,
)
from .metrics import MetricsReport, evaluate_depth
from .pipeline import (
    EstimatedMap,
    LateFusionDepthEstimator,
    NoSupervisionError,
    accept_entries,
    infer_em,
    train,
)
from .sparse_depth import (
    ErmEntry,
    LabelSets,
    MatchThresholds,
    SparseDepthMap,
    build_erm,
    build_rm,
    select_pcrm,
)

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "CameraPoint3D", "ConfigError", "ConsistencyEvaluator", "DepthCompleter",
    "ErmEntry", "EstimatedMap", "ExtractorInput", "FeatureExtractor", "FusionSample", "LabelSets",
    "LateFusionDepthEstimator", "MatchThresholds", "MetricsReport", "NoSupervisionError",
    "RadarReturn", "RunConfig", "SparseDepthMap", "accept_entries", "build_erm", "build_rm",
    "class_weights", "complete_depth", "compute_expansion_pixels", "evaluate_depth",
    "extract_features", "infer_em", "load_config", "parse_config", "project_point",
    "project_radar_horizontal", "select_pcrm", "train", "weighted_bce_loss",
]
