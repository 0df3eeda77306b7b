"""Articulated two-hand kinematic model: parameters, skeleton assets, FK, geometry."""

from .camera import BehindCameraError, Camera, look_at_camera
from .kinematics import (
    DEFAULT_REFERENCE_FOCAL,
    SingularRotationError,
    forward_kinematics,
    keypoints_np,
    project,
    rot6d_to_matrix,
)
from .occlusion import (
    DEFAULT_DELTA_OCC,
    collision_from_joints,
    collision_mask_batch,
    occlusion_margins,
    proxy_centers,
    proxy_spheres,
    visibility_from_joints,
)
from .params import (
    ARTICULATION_DIM,
    ARTICULATION_SLICE,
    BETA_DIM,
    HAND_DIM,
    IDENTITY_ROT6D,
    JOINTS_PER_HAND,
    LEFT_ROOT,
    NUM_JOINTS,
    NUM_ROTATIONS,
    POSE_DIM,
    RIGHT_ROOT,
    HandParams,
    PoseParams,
    articulation,
    articulation_indices,
    hand_block,
    scale_index,
)
from .prior import PcaPrior, fit_pca_prior
from .skeleton import (
    ASSET_FORMAT,
    GaussianProxy,
    HandSkeleton,
    ModelAssets,
    default_two_hand_assets,
)

__all__ = [
    "Camera",
    "BehindCameraError",
    "look_at_camera",
    "SingularRotationError",
    "rot6d_to_matrix",
    "forward_kinematics",
    "keypoints_np",
    "project",
    "DEFAULT_REFERENCE_FOCAL",
    "DEFAULT_DELTA_OCC",
    "visibility_from_joints",
    "occlusion_margins",
    "collision_from_joints",
    "collision_mask_batch",
    "proxy_centers",
    "proxy_spheres",
    "HandParams",
    "PoseParams",
    "hand_block",
    "articulation",
    "articulation_indices",
    "scale_index",
    "POSE_DIM",
    "HAND_DIM",
    "NUM_JOINTS",
    "JOINTS_PER_HAND",
    "NUM_ROTATIONS",
    "BETA_DIM",
    "ARTICULATION_DIM",
    "ARTICULATION_SLICE",
    "IDENTITY_ROT6D",
    "RIGHT_ROOT",
    "LEFT_ROOT",
    "PcaPrior",
    "fit_pca_prior",
    "HandSkeleton",
    "GaussianProxy",
    "ModelAssets",
    "ASSET_FORMAT",
    "default_two_hand_assets",
]
