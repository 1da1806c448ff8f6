"""motionscore: skill scoring and explainability for hand/tool motion data.

Pipeline: session recordings (per-frame boxes + hand keypoints) are turned
into a smoothed 150 x T feature matrix and 19 interpretable global motion
statistics; a dilated temporal-convolution backbone with attention pooling
and a fusion MLP predicts an expert score on a 1-10 ordinal scale; the
attention weights explain *when* the informative moments happened and
Shapley values over the global features explain *which* motion behaviors
drove the prediction.
"""

__version__ = "0.1.0"

from .data import (
    BoundingBox,
    Dataset,
    FrameObservation,
    SessionRecording,
    load_sessions,
    save_sessions,
    validate_session,
)
from .frames import PreprocessConfig, build_feature_matrix, channel_layout
from .global_stats import GLOBAL_FEATURE_NAMES, GlobalConfig, build_global_vector
from .model import ModelConfig, SkillModel
from .training import (
    EvalReport,
    SordConfig,
    TrainConfig,
    metrics,
    sord_loss,
    sord_targets,
    split_and_cv,
    train,
)
from .explain import (
    ShapAttribution,
    ShapConfig,
    export_beeswarm,
    shap_sampling,
    temporal_report,
)
from .synthetic import GeneratorConfig, generate, temporal_focus_config

__all__ = [
    "BoundingBox",
    "Dataset",
    "EvalReport",
    "FrameObservation",
    "GLOBAL_FEATURE_NAMES",
    "GeneratorConfig",
    "GlobalConfig",
    "ModelConfig",
    "PreprocessConfig",
    "SessionRecording",
    "ShapAttribution",
    "ShapConfig",
    "SkillModel",
    "SordConfig",
    "TrainConfig",
    "build_feature_matrix",
    "build_global_vector",
    "channel_layout",
    "export_beeswarm",
    "generate",
    "load_sessions",
    "metrics",
    "save_sessions",
    "shap_sampling",
    "sord_loss",
    "sord_targets",
    "split_and_cv",
    "temporal_focus_config",
    "temporal_report",
    "train",
    "validate_session",
]
