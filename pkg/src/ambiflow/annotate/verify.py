"""Independent re-verification of annotation sets.

Everything here is a second, self-contained code path: kinematics via
homogeneous transforms walked one joint at a time, occlusion via the
quadratic ray-segment/sphere equation, the PCA criterion via the
pseudo-inverse quadratic form of an explicitly assembled dense covariance,
and collision via squared distances. It deliberately shares no geometry
code with the generator's checker, so agreement is meaningful.

Comparisons against thresholds allow a 1e-9 slack in the lenient direction
to absorb cross-implementation floating-point differences.
"""

from __future__ import annotations

import math

import numpy as np

from ..handmodel.camera import Camera
from ..handmodel.skeleton import ModelAssets
from .generate import AnnotationSet
from .plausibility import PlausibilityConfig, resolve_pca_threshold

__all__ = ["verify_set", "verify_pose"]

_SLACK = 1e-9


def _rot_from_6d(entry: np.ndarray) -> np.ndarray:
    a1 = np.array(entry[0:3], dtype=np.float64)
    a2 = np.array(entry[3:6], dtype=np.float64)
    n1 = math.sqrt(float(a1 @ a1))
    if n1 == 0.0:
        raise ValueError("degenerate rotation input")
    b1 = a1 / n1
    u = a2 - float(a2 @ b1) * b1
    nu = math.sqrt(float(u @ u))
    if nu == 0.0:
        raise ValueError("degenerate rotation input")
    b2 = u / nu
    b3 = np.array([
        b1[1] * b2[2] - b1[2] * b2[1],
        b1[2] * b2[0] - b1[0] * b2[2],
        b1[0] * b2[1] - b1[1] * b2[0],
    ])
    return np.column_stack([b1, b2, b3])


def _homogeneous(rot: np.ndarray, trans: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = trans
    return m


def _fk_one_hand(block: np.ndarray, skeleton, camera: Camera, ref_focal: float) -> np.ndarray:
    n_rot = skeleton.n_rotations
    beta_dim = skeleton.beta_dim
    theta = block[: n_rot * 6].reshape(n_rot, 6)
    beta = block[n_rot * 6 : n_rot * 6 + beta_dim]
    t = block[-3:-1]
    s = block[-1]

    depth = ref_focal / s
    root = np.array([
        (t[0] - camera.principal[0]) / camera.focal[0] * depth,
        (t[1] - camera.principal[1]) / camera.focal[1] * depth,
        depth,
    ])

    n_kp = skeleton.n_keypoints
    world = [None] * n_kp
    world[0] = _homogeneous(_rot_from_6d(theta[0]), root)
    points = np.zeros((n_kp, 3))
    points[0] = root
    for j in range(1, n_kp):
        p = int(skeleton.parents[j])
        stretch = 1.0 + float(skeleton.shape_coeffs[j] @ beta)
        local_t = skeleton.rest_offsets[j] * stretch
        ridx = int(skeleton.rotation_index[j])
        local_r = _rot_from_6d(theta[ridx]) if ridx > 0 else np.eye(3)
        world[j] = world[p] @ _homogeneous(local_r, local_t)
        points[j] = world[j][:3, 3]
    return points


def _fk(psi: np.ndarray, assets: ModelAssets, camera: Camera, ref_focal: float) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.float64)
    parts = []
    for h, skeleton in enumerate(assets.hands):
        off = assets.hand_offset(h)
        parts.append(_fk_one_hand(psi[off : off + assets.hand_dim(h)], skeleton, camera,
                                  ref_focal))
    return np.concatenate(parts, axis=0)


def _project_point(p: np.ndarray, camera: Camera) -> tuple[float, float]:
    if p[2] <= 0:
        raise ValueError("point behind camera")
    return (
        camera.focal[0] * p[0] / p[2] + camera.principal[0],
        camera.focal[1] * p[1] / p[2] + camera.principal[1],
    )


def _sphere_list(points: np.ndarray, assets: ModelAssets,
                 occluders_cam: np.ndarray | None) -> list[tuple[np.ndarray, float, int, int]]:
    """(center, radius, parent_kp, child_kp) per sphere; -1 endpoints for occluders."""
    spheres = []
    for proxy in assets.proxies:
        off = assets.keypoint_offset(proxy.hand)
        child = off + proxy.bone
        parent = off + int(assets.hands[proxy.hand].parents[proxy.bone])
        center = points[parent] + proxy.frac * (points[child] - points[parent])
        spheres.append((center, proxy.std, parent, child))
    if occluders_cam is not None:
        for row in np.asarray(occluders_cam, dtype=np.float64).reshape(-1, 4):
            spheres.append((row[:3].copy(), float(row[3]), -1, -1))
    return spheres


def _keypoint_occluded(k: int, points: np.ndarray, spheres, delta_occ: float) -> bool:
    """Ray-segment/sphere test: P(t) = t * J for t in (0, 1 - delta/|J|]."""
    target = points[k]
    seg_len = math.sqrt(float(target @ target))
    if seg_len == 0.0:
        return False
    t_max = 1.0 - delta_occ / seg_len
    for center, radius, parent, child in spheres:
        if k in (parent, child):
            continue  # adjacent bone; a joint does not occlude itself
        a = float(target @ target)
        b = -2.0 * float(target @ center)
        c = float(center @ center) - radius * radius
        disc = b * b - 4.0 * a * c
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        t_entry = (-b - sq) / (2.0 * a)
        if 0.0 < t_entry <= t_max:
            return True
    return False


def _mahalanobis_pinv(x: np.ndarray, prior) -> float:
    sigma = prior.axes.T @ np.diag(prior.variances) @ prior.axes
    diff = np.asarray(x, dtype=np.float64) - prior.mean
    return float(diff @ np.linalg.pinv(sigma, rcond=1e-12) @ diff)


def verify_pose(psi: np.ndarray, psi_gt: np.ndarray, camera: Camera, assets: ModelAssets,
                cfg: PlausibilityConfig, occluders_cam: np.ndarray | None = None) -> bool:
    """Re-check all four criteria for one candidate, on the independent path."""
    points_gt = _fk(psi_gt, assets, camera, cfg.reference_focal)
    points = _fk(psi, assets, camera, cfg.reference_focal)
    if np.any(points[:, 2] <= 0):
        return False

    spheres_gt = _sphere_list(points_gt, assets, occluders_cam)
    spheres = _sphere_list(points, assets, occluders_cam)

    for k in range(len(points)):
        gt_occ = _keypoint_occluded(k, points_gt, spheres_gt, cfg.delta_occ)
        cand_occ = _keypoint_occluded(k, points, spheres, cfg.delta_occ)
        if gt_occ:
            if not cand_occ:  # criterion (b): occlusion must persist
                return False
        else:
            if cand_occ:  # criterion (a): visibility must persist
                return False
            ugt, vgt = _project_point(points_gt[k], camera)
            u, v = _project_point(points[k], camera)
            if math.hypot(u - ugt, v - vgt) > cfg.pixel_threshold + _SLACK:
                return False

    threshold = resolve_pca_threshold(cfg, assets)
    for h in range(assets.n_hands):
        off = assets.hand_offset(h)
        n_rot = assets.hands[h].n_rotations
        artic = psi[off + 6 : off + n_rot * 6]
        if _mahalanobis_pinv(artic, assets.priors[h]) > threshold + _SLACK:
            return False

    # criterion (d): inter-hand collision via squared distances, strict
    by_hand = {0: [], 1: []}
    for center, radius, parent, child in _sphere_list(points, assets, None):
        hand = 0 if child < assets.hands[0].n_keypoints else 1
        by_hand[hand].append((center, radius))
    for c_r, r_r in by_hand[0]:
        for c_l, r_l in by_hand[1]:
            d = c_r - c_l
            if float(d @ d) < (r_r + r_l) ** 2 - _SLACK:
                return False
    return True


def verify_set(ann_set: AnnotationSet | np.ndarray, psi_gt: np.ndarray, camera: Camera,
               assets: ModelAssets, cfg: PlausibilityConfig,
               occluders_cam: np.ndarray | None = None) -> bool:
    """True iff every member of the set passes the independent criteria (vacuous if empty)."""
    annotations = ann_set.annotations if isinstance(ann_set, AnnotationSet) else np.asarray(ann_set)
    if annotations.size == 0:
        return True
    return all(
        verify_pose(annotations[i], psi_gt, camera, assets, cfg, occluders_cam)
        for i in range(len(annotations))
    )
