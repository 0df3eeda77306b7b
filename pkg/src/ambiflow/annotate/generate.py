"""Plausible annotation sets by iterated perturb-and-reject search.

Starting from the ground-truth pose, each iteration perturbs every pose in
the current population (Gaussian noise on the articulation 6D entries,
log-normal noise on the perspective scale), keeps the perturbations that
pass all plausibility criteria, and merges them into the population. The
population is uniformly down-sampled to a cap between iterations; the
ground truth itself is always retained.

Perturbation deliberately leaves the root pixel position and shape
untouched: a visible root pins t almost exactly, while the scale factor is
what carries the monocular depth/scale ambiguity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..handmodel.camera import Camera
from ..handmodel.skeleton import ModelAssets
from .plausibility import PlausibilityConfig, check_plausibility, check_plausibility_batch

log = logging.getLogger(__name__)

__all__ = ["AnnotationSet", "generate_annotations", "perturb_poses"]


@dataclass
class AnnotationSet:
    """Plausible pose annotations for one (frame, camera); ground truth first."""

    annotations: np.ndarray  # (M, pose_dim)
    frame_id: str = ""
    config_hash: str = ""
    seed: int = 0
    exhausted: bool = False  # True when no proposal ever passed the checks

    def __post_init__(self):
        self.annotations = np.asarray(self.annotations, dtype=np.float64)
        if self.annotations.ndim != 2 or len(self.annotations) < 1:
            raise ValueError("an annotation set holds at least the ground-truth pose")

    def __len__(self) -> int:
        return len(self.annotations)


def perturb_poses(psis: np.ndarray, assets: ModelAssets, cfg: PlausibilityConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Gaussian articulation noise + log-normal scale noise; t, shape, global rotation fixed.

    Each proposal draws its own step-size multiplier, so rejection adapts the
    effective step to how constrained the scene is: tightly observed poses
    accept the small steps, heavily occluded ones also accept the large ones.
    """
    psis = np.atleast_2d(np.asarray(psis, dtype=np.float64)).copy()
    mag = rng.uniform(cfg.perturb_mag_min, cfg.perturb_mag_max, size=len(psis))
    for h in range(assets.n_hands):
        off = assets.hand_offset(h)
        n_rot = assets.hands[h].n_rotations
        idx = np.arange(off + 6, off + n_rot * 6)  # the non-global rotation entries
        if len(idx):
            noise = rng.normal(scale=cfg.perturb_std_rot, size=(len(psis), len(idx)))
            psis[:, idx] += mag[:, None] * noise
        s_idx = off + assets.hand_dim(h) - 1
        psis[:, s_idx] *= np.exp(mag * rng.normal(scale=cfg.perturb_std_scale, size=len(psis)))
    return psis


def generate_annotations(psi_gt: np.ndarray, camera: Camera, assets: ModelAssets,
                         cfg: PlausibilityConfig, rng: np.random.Generator,
                         occluders_cam: np.ndarray | None = None,
                         frame_id: str = "", config_hash: str = "",
                         seed: int = 0) -> AnnotationSet:
    psi_gt = np.asarray(psi_gt, dtype=np.float64)
    self_check = check_plausibility(psi_gt, psi_gt, camera, assets, cfg, occluders_cam)
    if not self_check.passed:
        raise ValueError(f"ground-truth pose fails its own plausibility check: {self_check}")

    population = psi_gt[None, :]
    ever_accepted = False
    for _ in range(cfg.iterations):
        seeds = np.repeat(population, cfg.proposals_per_seed, axis=0)
        proposals = perturb_poses(seeds, assets, cfg, rng)
        report = check_plausibility_batch(proposals, psi_gt, camera, assets, cfg, occluders_cam)
        accepted = proposals[report.passed]
        if len(accepted):
            ever_accepted = True
        population = np.concatenate([population, accepted], axis=0)
        if len(population) > cfg.population_cap:
            keep = rng.choice(len(population) - 1, size=cfg.population_cap - 1, replace=False)
            population = np.concatenate([population[:1], population[1 + np.sort(keep)]], axis=0)

    if not ever_accepted:
        log.warning("annotation search for %s accepted no proposals; returning ground truth only",
                    frame_id or "<frame>")
    return AnnotationSet(annotations=population, frame_id=frame_id, config_hash=config_hash,
                         seed=seed, exhausted=not ever_accepted)
