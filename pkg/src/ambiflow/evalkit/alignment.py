"""Joint-set alignments and mean per-joint position error.

Three alignments, applied to each joint set independently before comparing:

* ``RR``     each hand root-aligned on its own (articulation error only)
* ``RRR``    all joints aligned to the right hand's root (keeps the
             inter-hand arrangement)
* ``Global`` no alignment (absolute placement)
"""

from __future__ import annotations

import numpy as np

from ..handmodel.params import LEFT_ROOT, RIGHT_ROOT

__all__ = ["ALIGNMENTS", "align_set", "align", "mpjpe"]

ALIGNMENTS = ("RR", "RRR", "Global")


def align_set(joints: np.ndarray, mode: str, right_root: int = RIGHT_ROOT,
              left_root: int = LEFT_ROOT) -> np.ndarray:
    """Aligned copy of one joint set (..., n_kp, 3); set-wise, no reference needed."""
    joints = np.asarray(joints, dtype=np.float64)
    if mode == "Global":
        return joints.copy()
    out = joints.copy()
    if mode == "RRR":
        out -= joints[..., right_root : right_root + 1, :]
        return out
    if mode == "RR":
        out[..., :left_root, :] -= joints[..., right_root : right_root + 1, :]
        out[..., left_root:, :] -= joints[..., left_root : left_root + 1, :]
        return out
    raise ValueError(f"unknown alignment {mode!r}; expected one of {ALIGNMENTS}")


def align(pred: np.ndarray, gt: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Align prediction and ground truth, each relative to its own roots."""
    return align_set(pred, mode), align_set(gt, mode)


def mpjpe(pred: np.ndarray, gt: np.ndarray, mode: str = "Global") -> float:
    """Mean over joints of the Euclidean error after alignment, in mm."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"joint sets differ in shape: {pred.shape} vs {gt.shape}")
    a, b = align(pred, gt, mode)
    return float(np.linalg.norm(a - b, axis=-1).mean())
