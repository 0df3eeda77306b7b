"""Plausible multi-annotation generation and independent verification."""

from .generate import AnnotationSet, generate_annotations, perturb_poses
from .plausibility import (
    BatchReport,
    PlausibilityConfig,
    PlausibilityReport,
    check_plausibility,
    check_plausibility_batch,
    resolve_pca_threshold,
)
from .verify import verify_pose, verify_set

__all__ = [
    "PlausibilityConfig",
    "PlausibilityReport",
    "BatchReport",
    "check_plausibility",
    "check_plausibility_batch",
    "resolve_pca_threshold",
    "AnnotationSet",
    "generate_annotations",
    "perturb_poses",
    "verify_pose",
    "verify_set",
]
