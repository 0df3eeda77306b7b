"""Feature extraction, loss suite, and the training loop."""

from .features import (
    FeatureConfig,
    Observation,
    encode_observation,
    extract_features,
    init_feature_params,
)
from .loop import (ModelBundle, TrainConfig, TrainResult, build_model,
                   checkpoint_meta, load_model, train)
from .losses import (
    LossWeights,
    TrainingSample,
    loss_detmag,
    loss_j2d,
    loss_j3d,
    loss_mode,
    loss_nll,
    loss_theta,
    mode_annotation_index,
    total_loss,
    total_loss_graph,
)
from .norm import DEFAULT_CROP, PoseNorm, build_pose_norm

__all__ = [
    "Observation",
    "FeatureConfig",
    "encode_observation",
    "extract_features",
    "init_feature_params",
    "LossWeights",
    "TrainingSample",
    "loss_nll",
    "loss_detmag",
    "loss_mode",
    "loss_j3d",
    "loss_j2d",
    "loss_theta",
    "total_loss",
    "total_loss_graph",
    "mode_annotation_index",
    "TrainConfig",
    "TrainResult",
    "train",
    "ModelBundle",
    "load_model",
    "build_model",
    "checkpoint_meta",
    "PoseNorm",
    "build_pose_norm",
    "DEFAULT_CROP",
]
