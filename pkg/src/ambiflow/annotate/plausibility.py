"""Plausibility criteria for candidate pose annotations.

A candidate psi is plausible w.r.t. a ground-truth pose psi_gt when:

(a) every keypoint visible in psi_gt stays visible and projects within a
    pixel threshold of the ground-truth projection,
(b) every keypoint occluded in psi_gt stays occluded,
(c) each hand's articulation stays within a squared-Mahalanobis bound of
    the pose PCA prior, and
(d) the hands do not collide (no proxy-sphere interpenetration).

The checker is vectorized over a batch of candidates; the scalar wrapper
returns a per-criterion report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..handmodel.camera import Camera
from ..handmodel.kinematics import keypoints_np
from ..handmodel.occlusion import collision_mask_batch, visibility_from_joints
from ..handmodel.params import articulation
from ..handmodel.skeleton import ModelAssets

__all__ = ["PlausibilityConfig", "PlausibilityReport", "BatchReport",
           "check_plausibility", "check_plausibility_batch", "resolve_pca_threshold"]


@dataclass(frozen=True)
class PlausibilityConfig:
    pixel_threshold: float = 5.0  # px, criterion (a)
    pca_quantile: float = 0.99  # criterion (c) bound = chi^2 quantile at prior dim
    pca_threshold: float | None = None  # explicit override of the bound
    iterations: int = 10
    population_cap: int = 100
    proposals_per_seed: int = 8
    perturb_std_rot: float = 0.012  # on articulation 6D entries
    perturb_std_scale: float = 0.02  # relative, on the perspective scale
    perturb_mag_min: float = 0.5  # per-proposal step-size multiplier range
    perturb_mag_max: float = 2.5
    delta_occ: float = 5.0  # mm, occlusion depth clearance
    reference_focal: float = 800.0

    def __post_init__(self):
        if self.pixel_threshold <= 0 or self.perturb_std_rot <= 0 or self.perturb_std_scale <= 0:
            raise ValueError("plausibility thresholds and perturbation scales must be positive")
        if self.pca_threshold is not None and self.pca_threshold <= 0:
            raise ValueError("pca_threshold must be positive")

    def to_dict(self) -> dict:
        return {
            "pixel_threshold": self.pixel_threshold,
            "pca_quantile": self.pca_quantile,
            "pca_threshold": self.pca_threshold,
            "iterations": self.iterations,
            "population_cap": self.population_cap,
            "proposals_per_seed": self.proposals_per_seed,
            "perturb_std_rot": self.perturb_std_rot,
            "perturb_std_scale": self.perturb_std_scale,
            "perturb_mag_min": self.perturb_mag_min,
            "perturb_mag_max": self.perturb_mag_max,
            "delta_occ": self.delta_occ,
            "reference_focal": self.reference_focal,
        }


def resolve_pca_threshold(cfg: PlausibilityConfig, assets: ModelAssets) -> float:
    if cfg.pca_threshold is not None:
        return cfg.pca_threshold
    if assets.priors is None:
        raise ValueError("assets carry no PCA prior; cannot derive the pca threshold")
    dof = assets.priors[0].n_components
    return float(stats.chi2.ppf(cfg.pca_quantile, df=dof))


@dataclass
class BatchReport:
    """Vectorized criterion outcomes for a batch of candidates."""

    passed: np.ndarray  # (P,) bool
    visible_ok: np.ndarray  # (P,) criterion (a)
    occluded_ok: np.ndarray  # (P,) criterion (b)
    pca_ok: np.ndarray  # (P,) criterion (c)
    collision_free: np.ndarray  # (P,) criterion (d)
    max_pixel_dev: np.ndarray  # (P,) over gt-visible keypoints
    mahalanobis: np.ndarray  # (P, n_hands)


@dataclass
class PlausibilityReport:
    passed: bool
    visible_ok: bool
    occluded_ok: bool
    pca_ok: bool
    collision_free: bool
    max_pixel_dev: float
    mahalanobis: list[float] = field(default_factory=list)


def check_plausibility_batch(psis: np.ndarray, psi_gt: np.ndarray, camera: Camera,
                             assets: ModelAssets, cfg: PlausibilityConfig,
                             occluders_cam: np.ndarray | None = None) -> BatchReport:
    psis = np.asarray(psis, dtype=np.float64)
    if psis.ndim == 1:
        psis = psis[None, :]
    n = len(psis)

    joints_gt = keypoints_np(psi_gt, assets, camera, cfg.reference_focal)
    vis_gt = visibility_from_joints(joints_gt, assets, occluders_cam, cfg.delta_occ)
    proj_gt = camera.project_np(joints_gt)

    joints = keypoints_np(psis, assets, camera, cfg.reference_focal)
    in_front = np.all(joints[..., 2] > 1e-6, axis=-1)  # (P,)

    # project with a safe depth; candidates with any keypoint behind the
    # camera are rejected outright below
    z = np.where(joints[..., 2] > 1e-6, joints[..., 2], 1.0)
    proj = camera.focal * joints[..., :2] / z[..., None] + camera.principal

    safe_joints = np.where(in_front[:, None, None], joints, np.abs(joints) + 1.0)
    # the placeholder only keeps visibility() happy for rejected candidates
    safe_joints[..., 2] = np.maximum(safe_joints[..., 2], 1.0)
    vis = visibility_from_joints(safe_joints, assets, occluders_cam, cfg.delta_occ)

    pix_dev = np.linalg.norm(proj - proj_gt, axis=-1)  # (P, n_kp)
    dev_vis = np.where(vis_gt, pix_dev, 0.0)
    max_pixel_dev = dev_vis.max(axis=-1)
    visible_ok = in_front & np.all((~vis_gt) | ((pix_dev <= cfg.pixel_threshold) & vis), axis=-1)
    occluded_ok = np.all(vis_gt | (~vis), axis=-1)

    threshold = resolve_pca_threshold(cfg, assets)
    mahal = np.stack(
        [assets.priors[h].mahalanobis_sq(articulation(psis, h)) for h in range(assets.n_hands)],
        axis=-1,
    )
    pca_ok = np.all(mahal <= threshold, axis=-1)

    collision_free = ~collision_mask_batch(joints, assets)

    passed = visible_ok & occluded_ok & pca_ok & collision_free
    return BatchReport(passed=passed, visible_ok=visible_ok, occluded_ok=occluded_ok,
                       pca_ok=pca_ok, collision_free=collision_free,
                       max_pixel_dev=max_pixel_dev, mahalanobis=mahal)


def check_plausibility(psi: np.ndarray, psi_gt: np.ndarray, camera: Camera,
                       assets: ModelAssets, cfg: PlausibilityConfig,
                       occluders_cam: np.ndarray | None = None) -> PlausibilityReport:
    rep = check_plausibility_batch(np.asarray(psi)[None, :], psi_gt, camera, assets, cfg,
                                   occluders_cam)
    return PlausibilityReport(
        passed=bool(rep.passed[0]),
        visible_ok=bool(rep.visible_ok[0]),
        occluded_ok=bool(rep.occluded_ok[0]),
        pca_ok=bool(rep.pca_ok[0]),
        collision_free=bool(rep.collision_free[0]),
        max_pixel_dev=float(rep.max_pixel_dev[0]),
        mahalanobis=[float(m) for m in rep.mahalanobis[0]],
    )
