"""Camera view ranking by sample ambiguity, regret scoring, and stereo fusion.

All inputs are expected in a shared (world) frame so scores are comparable
across cameras.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import mpjpe
from .ambiguity import ambiguity_std

__all__ = ["ViewFrame", "ViewScore", "select_view", "stereo_fuse"]


@dataclass
class ViewFrame:
    """One frame as seen from one camera: pose samples, the estimate read out
    for error scoring, and the ground truth.

    ``estimate`` is either one pose (n_kp, 3) or a stack (K, n_kp, 3) of
    candidate readouts; a stack is scored by its mean MPJPE, i.e. the
    expected error of committing to one of the candidates."""

    samples: np.ndarray  # (S, n_kp, 3)
    estimate: np.ndarray  # (n_kp, 3) or (K, n_kp, 3)
    gt: np.ndarray  # (n_kp, 3)

    def error(self, mode: str) -> float:
        est = np.asarray(self.estimate)
        if est.ndim == 2:
            return mpjpe(est, self.gt, mode)
        return float(np.mean([mpjpe(e, self.gt, mode) for e in est]))


@dataclass
class ViewScore:
    cam_id: str
    ambiguity: float  # mm, mean over frames
    error: float  # mm, mean over frames of MPJPE(estimate)
    regret: float  # mm, error minus the best camera's error
    rank: int  # 0 = least ambiguous


def select_view(per_camera: dict[str, list[ViewFrame]], mode: str = "Global"
                ) -> list[ViewScore]:
    """Rank cameras by mean sample ambiguity (ascending); regret against the best error.

    Returns scores sorted by rank. Requires at least two cameras with at
    least one frame each.
    """
    if len(per_camera) < 2:
        raise ValueError("view selection needs at least two cameras")
    cam_ids = sorted(per_camera)
    amb, err = {}, {}
    for cam_id in cam_ids:
        frames = per_camera[cam_id]
        if not frames:
            raise ValueError(f"camera {cam_id} has no frames")
        amb[cam_id] = float(np.mean([ambiguity_std(f.samples) for f in frames]))
        err[cam_id] = float(np.mean([f.error(mode) for f in frames]))
    best = min(err.values())
    order = sorted(cam_ids, key=lambda c: (amb[c], c))
    return [
        ViewScore(cam_id=c, ambiguity=amb[c], error=err[c], regret=err[c] - best, rank=i)
        for i, c in enumerate(order)
    ]


def stereo_fuse(samples_a: np.ndarray, samples_b: np.ndarray, var_floor: float = 1e-6
                ) -> tuple[np.ndarray, np.ndarray, float]:
    """Product of per-joint diagonal Gaussians fitted to two views' samples.

    Fused precision adds, fused mean is precision-weighted; the pair score is
    the mean over joints of the fused variance trace (lower disambiguates
    better). Variances are floored at ``var_floor`` mm^2 before inversion.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise ValueError("expected (S, n_kp, 3) sample stacks over matching keypoints")
    mean_a, mean_b = a.mean(axis=0), b.mean(axis=0)
    var_a = np.maximum(a.var(axis=0, ddof=0), var_floor)
    var_b = np.maximum(b.var(axis=0, ddof=0), var_floor)
    prec = 1.0 / var_a + 1.0 / var_b
    fused_var = 1.0 / prec
    fused_mean = fused_var * (mean_a / var_a + mean_b / var_b)
    score = float(fused_var.sum(axis=-1).mean())
    return fused_mean, fused_var, score
