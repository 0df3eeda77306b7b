"""Keypoint visibility by proxy-sphere ray occlusion, and inter-hand collision.

A keypoint is occluded when the camera ray to it enters any proxy sphere at
a depth at least ``delta_occ`` closer than the keypoint itself; proxies on
the bones adjacent to the keypoint are ignored (a joint does not occlude
itself). Extra free-floating occluder spheres may be supplied as an
(M, 4) array of [x, y, z, radius] in the camera frame.

All functions take camera-frame keypoints (batched or not) as plain arrays.
"""

from __future__ import annotations

import numpy as np

from .skeleton import ModelAssets

__all__ = [
    "DEFAULT_DELTA_OCC",
    "proxy_centers",
    "proxy_spheres",
    "visibility_from_joints",
    "occlusion_margins",
    "collision_from_joints",
]

DEFAULT_DELTA_OCC = 5.0  # mm


def proxy_centers(joints: np.ndarray, assets: ModelAssets) -> np.ndarray:
    """Centers (..., P, 3) of all body proxies given keypoints (..., n_kp, 3)."""
    par, chd, frac, _ = assets.proxy_attachment()
    a = joints[..., par, :]
    b = joints[..., chd, :]
    return a + frac[..., :, None] * (b - a)


def proxy_spheres(joints: np.ndarray, assets: ModelAssets) -> tuple[np.ndarray, np.ndarray]:
    """(centers (..., P, 3), radii (P,)) of the 1-sigma proxy spheres."""
    _, _, _, std = assets.proxy_attachment()
    return proxy_centers(joints, assets), std


def _sphere_blocking(joints: np.ndarray, centers: np.ndarray, radii: np.ndarray,
                     delta_occ: float) -> np.ndarray:
    """Does sphere p block the camera ray to keypoint k? (..., n_kp, P) booleans."""
    dist_k = np.linalg.norm(joints, axis=-1)  # (..., n_kp)
    dirs = joints / np.maximum(dist_k[..., None], 1e-12)
    # closest approach of the ray (origin -> keypoint) to each sphere center
    t_c = np.einsum("...kd,...pd->...kp", dirs, centers)
    c_sq = np.sum(centers * centers, axis=-1)  # (..., P)
    miss_sq = c_sq[..., None, :] - t_c**2  # squared distance ray <-> center
    rad_sq = radii**2
    hits = miss_sq < rad_sq
    # entry depth along the ray; only meaningful where hits
    entry = t_c - np.sqrt(np.maximum(rad_sq - miss_sq, 0.0))
    blocking = hits & (entry > 0.0) & (entry <= dist_k[..., :, None] - delta_occ)
    return blocking


def _adjacency_exclusion(assets: ModelAssets) -> np.ndarray:
    """(n_kp, P) mask: True where proxy p sits on a bone adjacent to keypoint k."""
    par, chd, _, _ = assets.proxy_attachment()
    n_kp = assets.n_keypoints
    kp = np.arange(n_kp)[:, None]
    return (par[None, :] == kp) | (chd[None, :] == kp)


def visibility_from_joints(joints: np.ndarray, assets: ModelAssets,
                           extra_spheres: np.ndarray | None = None,
                           delta_occ: float = DEFAULT_DELTA_OCC) -> np.ndarray:
    """Visibility flags (..., n_kp): True when the camera sees the keypoint."""
    joints = np.asarray(joints, dtype=np.float64)
    if np.any(joints[..., 2] <= 0):
        raise ValueError("visibility requires all keypoints in front of the camera")
    occluded = np.zeros(joints.shape[:-1], dtype=bool)
    if assets.proxies:
        centers, radii = proxy_spheres(joints, assets)
        blocking = _sphere_blocking(joints, centers, radii, delta_occ)
        blocking &= ~_adjacency_exclusion(assets)
        occluded |= blocking.any(axis=-1)
    if extra_spheres is not None and len(extra_spheres):
        extra = np.asarray(extra_spheres, dtype=np.float64)
        centers = np.broadcast_to(extra[:, :3], joints.shape[:-2] + extra[:, :3].shape)
        blocking = _sphere_blocking(joints, centers, extra[:, 3], delta_occ)
        occluded |= blocking.any(axis=-1)
    return ~occluded


def occlusion_margins(joints: np.ndarray, assets: ModelAssets,
                      extra_spheres: np.ndarray | None = None) -> np.ndarray:
    """Min over non-adjacent spheres of (ray-to-center distance - radius), per keypoint.

    Positive margins mean the ray clears every sphere by that distance; used
    to assert that visibility flags are stable under sub-margin perturbations.
    """
    joints = np.asarray(joints, dtype=np.float64)
    margins = np.full(joints.shape[:-1], np.inf)

    def update(centers, radii, exclusion=None):
        dist_k = np.linalg.norm(joints, axis=-1)
        dirs = joints / np.maximum(dist_k[..., None], 1e-12)
        t_c = np.einsum("...kd,...pd->...kp", dirs, centers)
        c_sq = np.sum(centers * centers, axis=-1)
        miss = np.sqrt(np.maximum(c_sq[..., None, :] - t_c**2, 0.0)) - radii
        if exclusion is not None:
            miss = np.where(exclusion, np.inf, miss)
        # spheres behind the camera or beyond the keypoint cannot occlude
        miss = np.where(t_c <= 0, np.inf, miss)
        np.minimum(margins, miss.min(axis=-1), out=margins)

    if assets.proxies:
        centers, radii = proxy_spheres(joints, assets)
        update(centers, radii, _adjacency_exclusion(assets))
    if extra_spheres is not None and len(extra_spheres):
        extra = np.asarray(extra_spheres, dtype=np.float64)
        centers = np.broadcast_to(extra[:, :3], joints.shape[:-2] + extra[:, :3].shape)
        update(centers, extra[:, 3])
    return margins


def collision_from_joints(joints: np.ndarray, assets: ModelAssets
                          ) -> tuple[bool, list[tuple[int, int]]]:
    """True iff any right-hand/left-hand proxy sphere pair interpenetrates.

    Contact at exactly std_a + std_b does not count (strict inequality).
    Pair indices refer to positions in ``assets.proxies``.
    """
    if assets.n_hands != 2:
        raise ValueError("collision is defined for the two-hand model")
    joints = np.asarray(joints, dtype=np.float64)
    if joints.ndim != 2:
        raise ValueError("collision_from_joints expects a single pose (n_kp, 3)")
    centers, radii = proxy_spheres(joints, assets)
    hand_of = np.array([p.hand for p in assets.proxies])
    right = np.flatnonzero(hand_of == 0)
    left = np.flatnonzero(hand_of == 1)
    if len(right) == 0 or len(left) == 0:
        return False, []
    diff = centers[right][:, None, :] - centers[left][None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    limit = radii[right][:, None] + radii[left][None, :]
    hit = dist < limit
    pairs = [(int(right[i]), int(left[j])) for i, j in zip(*np.nonzero(hit))]
    return bool(hit.any()), pairs


def collision_mask_batch(joints: np.ndarray, assets: ModelAssets) -> np.ndarray:
    """Vectorized collision flags for a batch of poses (B, n_kp, 3) -> (B,)."""
    joints = np.asarray(joints, dtype=np.float64)
    centers, radii = proxy_spheres(joints, assets)
    hand_of = np.array([p.hand for p in assets.proxies])
    right = np.flatnonzero(hand_of == 0)
    left = np.flatnonzero(hand_of == 1)
    diff = centers[..., right, None, :] - centers[..., None, left, :]
    dist = np.linalg.norm(diff, axis=-1)
    limit = radii[right][:, None] + radii[left][None, :]
    return (dist < limit).any(axis=(-2, -1))
