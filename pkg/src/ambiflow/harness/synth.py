"""Synthetic world generation: scenes, camera rigs, observations, annotations.

A world is a camera ring around the origin plus, per frame, a two-hand scene
(correlated articulation from a factor model, random global rotations, roots
placed near the origin) and a few free-floating occluder spheres parked
between some camera and the hands. Every (frame, camera) pair becomes one
dataset record with the camera-frame pose parameterization, the projected
observation, visibility flags, and a generated plausible-annotation set.

Generation is deterministic for a given config: every record draws from its
own seed stream derived from (seed, frame, camera).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..annotate.generate import generate_annotations
from ..annotate.plausibility import PlausibilityConfig, resolve_pca_threshold
from ..handmodel.camera import Camera, look_at_camera
from ..handmodel.kinematics import keypoints_np, rot6d_to_matrix
from ..handmodel.occlusion import collision_from_joints
from ..handmodel.params import IDENTITY_ROT6D
from ..handmodel.prior import fit_pca_prior
from ..handmodel.skeleton import ModelAssets, default_two_hand_assets
from .dataset import JOINT2D_SENTINEL, FrameRecord
from ..handmodel.occlusion import visibility_from_joints

log = logging.getLogger(__name__)

__all__ = ["ArticulationSampler", "build_world_assets", "make_cameras", "synth_records"]

_MIN_DEPTH = 120.0  # mm, every keypoint must stay at least this far in front of each camera


@dataclass
class ArticulationSampler:
    """Correlated Gaussian over the 90 articulation entries of one hand."""

    mean: np.ndarray  # (90,)
    loadings: np.ndarray  # (90, n_factors)
    noise: float

    def sample(self, rng: np.random.Generator, n: int = 1, scale: float = 1.0) -> np.ndarray:
        latents = rng.standard_normal((n, self.loadings.shape[1]))
        out = self.mean + scale * latents @ self.loadings.T
        out += rng.normal(scale=self.noise, size=(n, self.mean.shape[0]))
        return out[0] if n == 1 else out


def _make_sampler(rng: np.random.Generator, n_factors: int, noise: float) -> ArticulationSampler:
    mean = np.tile(IDENTITY_ROT6D, 15)
    # random flexion-style factor loadings, strongest on proximal joints
    loadings = rng.normal(scale=0.12, size=(90, n_factors))
    taper = np.repeat(np.tile([1.0, 0.8, 0.6], 5), 6)  # mcp, pip, dip per finger
    loadings *= taper[:, None]
    return ArticulationSampler(mean=mean, loadings=loadings, noise=noise)


def build_world_assets(cfg: dict) -> tuple[ModelAssets, list[ArticulationSampler]]:
    """Default skeleton plus PCA priors fitted per hand on a sampled corpus."""
    seed = cfg["seed"]
    samplers = []
    corpora = []
    for hand in (0, 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5, hand]))
        sampler = _make_sampler(rng, cfg["world.articulation_factors"],
                                cfg["world.articulation_noise"])
        samplers.append(sampler)
        corpora.append(sampler.sample(rng, cfg["world.prior_corpus"],
                                      scale=cfg["world.pose_scale"]))
    priors = [fit_pca_prior(c, cfg["world.prior_components"]) for c in corpora]
    return default_two_hand_assets(priors=priors), samplers


def make_cameras(cfg: dict) -> list[Camera]:
    n = cfg["world.cameras"]
    radius = cfg["world.camera_radius"]
    focal = cfg["world.camera_focal"]
    res = cfg["world.resolution"]
    cams = []
    for i in range(n):
        phi = 2.0 * np.pi * i / n
        elev = 0.18 * radius * (1 if i % 2 == 0 else -1)
        pos = np.array([radius * np.cos(phi), radius * np.sin(phi), elev])
        cams.append(look_at_camera(pos, np.zeros(3), focal=[focal, focal],
                                   principal=[res / 2.0, res / 2.0], cam_id=f"cam{i:02d}"))
    return cams


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1.0
    return q


def _world_keypoints(artic: np.ndarray, global_rot: np.ndarray, beta: np.ndarray,
                     root: np.ndarray, skeleton) -> np.ndarray:
    theta = np.concatenate([IDENTITY_ROT6D[None, :], artic.reshape(15, 6)], axis=0)
    local = rot6d_to_matrix(theta).data
    local[0] = global_rot
    stretch = 1.0 + skeleton.shape_coeffs @ beta
    offsets = skeleton.rest_offsets * stretch[:, None]
    n = skeleton.n_keypoints
    pos = np.zeros((n, 3))
    rot = [None] * n
    pos[0] = root
    rot[0] = local[0]
    for j in range(1, n):
        p = int(skeleton.parents[j])
        pos[j] = pos[p] + rot[p] @ offsets[j]
        ridx = int(skeleton.rotation_index[j])
        rot[j] = rot[p] @ local[ridx] if ridx > 0 else rot[p]
    return pos


@dataclass
class Scene:
    artics: list[np.ndarray]  # per hand (90,)
    betas: list[np.ndarray]  # per hand (10,)
    global_rots: list[np.ndarray]  # per hand (3, 3) world frame
    roots: list[np.ndarray]  # per hand (3,) world frame, mm
    world_joints: np.ndarray  # (n_kp, 3)
    occluders: np.ndarray  # (k, 4) world [x, y, z, r]


def _sample_scene(rng: np.random.Generator, cfg: dict, assets: ModelAssets,
                  samplers: list[ArticulationSampler], cameras: list[Camera],
                  pca_threshold: float, max_tries: int = 200) -> Scene:
    res = cfg["world.resolution"]
    for _ in range(max_tries):
        artics, betas, rots, roots = [], [], [], []
        center = rng.uniform(-cfg["world.scene_jitter"], cfg["world.scene_jitter"], size=3)
        sep_dir = rng.standard_normal(3)
        sep_dir /= np.linalg.norm(sep_dir)
        sep = rng.uniform(cfg["world.hand_separation_min"], cfg["world.hand_separation_max"])
        for hand in (0, 1):
            artics.append(samplers[hand].sample(rng, scale=cfg["world.pose_scale"]))
            betas.append(rng.normal(scale=0.3, size=10))
            rots.append(_random_rotation(rng))
            roots.append(center if hand == 0 else center + sep * sep_dir)

        if any(assets.priors[h].mahalanobis_sq(artics[h]) > pca_threshold for h in (0, 1)):
            continue
        joints = np.concatenate([
            _world_keypoints(artics[h], rots[h], betas[h], roots[h], assets.hands[h])
            for h in (0, 1)
        ])
        colliding, _ = collision_from_joints(joints, assets)
        if colliding:
            continue
        ok = True
        for cam in cameras:
            jc = cam.world_to_cam(joints)
            if np.any(jc[:, 2] < _MIN_DEPTH):
                ok = False
                break
            uv = cam.focal * jc[:, :2] / jc[:, 2:3] + cam.principal
            root_uv = uv[[0, assets.hands[0].n_keypoints]]
            if np.any(root_uv < 20.0) or np.any(root_uv > res - 20.0):
                ok = False
                break
        if not ok:
            continue

        occluders = _sample_occluders(rng, cfg, cameras)
        return Scene(artics=artics, betas=betas, global_rots=rots, roots=roots,
                     world_joints=joints, occluders=occluders)
    raise RuntimeError("could not sample a valid scene; loosen the world config")


def _sample_occluders(rng: np.random.Generator, cfg: dict, cameras: list[Camera]) -> np.ndarray:
    k = cfg["world.occluders"]
    if k == 0:
        return np.zeros((0, 4))
    radius = cfg["world.camera_radius"]
    rows = []
    for _ in range(k):
        cam = cameras[rng.integers(len(cameras))]
        cam_pos = -cam.rotation.T @ cam.translation
        frac = rng.uniform(cfg["world.occluder_shell_min"], cfg["world.occluder_shell_max"])
        pos = frac * cam_pos * (1.0 + rng.normal(scale=0.05))
        pos += rng.normal(scale=0.08 * radius * frac, size=3)
        r = rng.uniform(cfg["world.occluder_radius_min"], cfg["world.occluder_radius_max"])
        rows.append([pos[0], pos[1], pos[2], r])
    return np.array(rows)


def _psi_for_camera(scene: Scene, cam: Camera, assets: ModelAssets,
                    reference_focal: float) -> np.ndarray:
    parts = []
    for hand in (0, 1):
        root_cam = cam.world_to_cam(scene.roots[hand])
        t = cam.focal * root_cam[:2] / root_cam[2] + cam.principal
        s = reference_focal / root_cam[2]
        rot_cam = cam.rotation @ scene.global_rots[hand]
        theta0 = np.concatenate([rot_cam[:, 0], rot_cam[:, 1]])
        parts.append(np.concatenate([theta0, scene.artics[hand], scene.betas[hand], t, [s]]))
    return np.concatenate(parts)


def synth_records(cfg: dict, assets: ModelAssets, samplers: list[ArticulationSampler],
                  plaus_cfg: PlausibilityConfig, config_hash: str = "") -> list[FrameRecord]:
    """All (frame, camera) records of a synthetic dataset, deterministic per config."""
    seed = cfg["seed"]
    cameras = make_cameras(cfg)
    n_frames = cfg["world.frames"]
    n_test_cams = cfg["world.test_cameras"]
    n_test_frames = int(np.ceil(n_frames * cfg["world.test_frames_fraction"]))
    test_cams = {c.cam_id for c in cameras[len(cameras) - n_test_cams:]} if n_test_cams else set()
    test_frames = {f"frame{idx:05d}" for idx in range(n_frames - n_test_frames, n_frames)}
    pca_threshold = resolve_pca_threshold(plaus_cfg, assets)
    ref_focal = plaus_cfg.reference_focal

    records = []
    for f_idx in range(n_frames):
        frame_id = f"frame{f_idx:05d}"
        scene_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE, f_idx]))
        scene = _sample_scene(scene_rng, cfg, assets, samplers, cameras, pca_threshold)
        for c_idx, cam in enumerate(cameras):
            psi = _psi_for_camera(scene, cam, assets, ref_focal)
            joints_cam = keypoints_np(psi, assets, cam, ref_focal)
            expected = cam.world_to_cam(scene.world_joints)
            if np.abs(joints_cam - expected).max() > 1e-6:
                raise RuntimeError("camera-frame pose does not reproduce the world scene")

            occ_cam = np.concatenate([cam.world_to_cam(scene.occluders[:, :3]),
                                      scene.occluders[:, 3:4]], axis=1) \
                if len(scene.occluders) else np.zeros((0, 4))
            vis = visibility_from_joints(joints_cam, assets, occ_cam, plaus_cfg.delta_occ)
            uv = cam.project_np(joints_cam)
            joints2d = np.where(vis[:, None], uv, JOINT2D_SENTINEL)

            ann_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA22, f_idx, c_idx]))
            ann = generate_annotations(psi, cam, assets, plaus_cfg, ann_rng,
                                       occluders_cam=occ_cam, frame_id=frame_id,
                                       config_hash=config_hash, seed=seed)

            cam_is_test = cam.cam_id in test_cams
            frame_is_test = frame_id in test_frames
            split = "test" if (cam_is_test and frame_is_test) else \
                "train" if (not cam_is_test and not frame_is_test) else "mixed"
            records.append(FrameRecord(
                frame_id=frame_id,
                cam_id=cam.cam_id,
                split=split,
                camera=cam,
                joints2d=joints2d,
                visibility=vis,
                joints3d=joints_cam,
                psi_gt=psi,
                annotations=ann.annotations,
                occluders_world=scene.occluders,
                ann_seed=seed,
                ann_exhausted=ann.exhausted,
            ))
    return records
