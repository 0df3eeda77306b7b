"""Distribution and accuracy metrics: alignments, MPJPE, MMD, ambiguity, views."""

from .alignment import ALIGNMENTS, align, align_set, mpjpe
from .ambiguity import ambiguity_std
from .mmd import DEFAULT_SCALES, MMD_REDUCTION_NOTE, mmd, mmd_sq_per_scale
from .views import ViewFrame, ViewScore, select_view, stereo_fuse

__all__ = [
    "ALIGNMENTS",
    "align",
    "align_set",
    "mpjpe",
    "ambiguity_std",
    "mmd",
    "mmd_sq_per_scale",
    "DEFAULT_SCALES",
    "MMD_REDUCTION_NOTE",
    "ViewFrame",
    "ViewScore",
    "select_view",
    "stereo_fuse",
]
