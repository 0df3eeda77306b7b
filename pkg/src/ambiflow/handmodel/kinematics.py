"""Differentiable forward kinematics: rotations, keypoints, projection.

Everything here is built from diffcore ops, so it supports gradients w.r.t.
all pose parameters and runs batched: a leading batch dimension on the pose
vector propagates through to the keypoints.

Depth convention: the hand root is placed on the camera ray through the
pixel position t, at depth = reference_focal / s. This realizes global-pose
recovery from a known focal length with one explicit, documented formula;
it is one consistent choice among several (flagged at the API level).
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .camera import BehindCameraError, Camera
from .skeleton import ModelAssets

__all__ = [
    "SingularRotationError",
    "rot6d_to_matrix",
    "forward_kinematics",
    "project",
    "keypoints_np",
    "DEFAULT_REFERENCE_FOCAL",
]

DEFAULT_REFERENCE_FOCAL = 800.0

_EPS_NORM = 1e-12


class SingularRotationError(ValueError):
    """6D rotation input with a zero or parallel column pair."""


def _rep3(x: Tensor) -> Tensor:
    # (...,1) -> (...,3); explicit expansion instead of broadcasting
    return dc.concat([x, x, x], axis=-1)


def _unit_rows(a: Tensor) -> Tensor:
    nsq = dc.sum_(dc.square(a), axis=-1, keepdims=True)
    if np.any(nsq.data <= _EPS_NORM):
        raise SingularRotationError("zero-length column in 6D rotation input")
    return dc.div(a, _rep3(dc.sqrt(nsq)))


def _cross(a: Tensor, b: Tensor) -> Tensor:
    ax, ay, az = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    bx, by, bz = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return dc.concat([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def rot6d_to_matrix(a) -> Tensor:
    """Gram-Schmidt a (...,6) = [a1|a2] pair into (...,3,3) rotation matrices.

    b1 = a1/|a1|, b2 = normalized rejection of a2 from b1, b3 = b1 x b2;
    the b vectors are the matrix *columns*.
    """
    a = dc.as_tensor(a)
    if a.shape[-1] != 6:
        raise dc.ContractError(f"rot6d input must end in 6 entries, got {a.shape}")
    a1, a2 = a[..., 0:3], a[..., 3:6]
    b1 = _unit_rows(a1)
    d = dc.sum_(a2 * b1, axis=-1, keepdims=True)
    u = a2 - _rep3(d) * b1
    usq = dc.sum_(dc.square(u), axis=-1, keepdims=True)
    if np.any(usq.data <= _EPS_NORM):
        raise SingularRotationError("parallel columns in 6D rotation input")
    b2 = dc.div(u, _rep3(dc.sqrt(usq)))
    b3 = _cross(b1, b2)
    cols = [dc.reshape(b, b.shape + (1,)) for b in (b1, b2, b3)]
    return dc.concat(cols, axis=-1)


def _constant(value: np.ndarray, batch: tuple[int, ...]) -> Tensor:
    return Tensor(np.broadcast_to(value, batch + value.shape).copy())


def _hand_keypoints(block: Tensor, skeleton, camera: Camera, reference_focal: float) -> Tensor:
    """Keypoints (..., n_kp, 3) of one hand from its (..., hand_dim) block."""
    batch = block.shape[:-1]
    n_rot = skeleton.n_rotations
    beta_dim = skeleton.beta_dim
    n_kp = skeleton.n_keypoints

    theta = dc.reshape(block[..., : n_rot * 6], batch + (n_rot, 6))
    beta = block[..., n_rot * 6 : n_rot * 6 + beta_dim]
    t = block[..., -3:-1]
    s = block[..., -1:]
    if np.any(s.data <= 0):
        raise ValueError("perspective scale must be positive")

    rot = rot6d_to_matrix(theta)  # (..., n_rot, 3, 3)

    # bone offsets, affine in beta: rest * (1 + coeffs @ beta)
    factors = dc.matmul(beta, skeleton.shape_coeffs.T) + 1.0  # (..., n_kp)
    factors3 = _rep3(dc.reshape(factors, batch + (n_kp, 1)))
    offsets = _constant(skeleton.rest_offsets, batch) * factors3

    # root on the camera ray through pixel t at depth reference_focal / s
    depth = dc.div(dc.as_tensor(float(reference_focal)), s)  # (..., 1)
    rx = dc.div(t[..., 0:1] - float(camera.principal[0]), float(camera.focal[0]))
    ry = dc.div(t[..., 1:2] - float(camera.principal[1]), float(camera.focal[1]))
    root = dc.concat([rx * depth, ry * depth, depth], axis=-1)  # (..., 3)

    key = (Ellipsis, slice(None), slice(None))
    global_rot: list[Tensor | None] = [None] * n_kp
    pos: list[Tensor] = [root] * n_kp
    global_rot[0] = rot[(Ellipsis, 0) + key[1:]]
    for j in range(1, n_kp):
        p = int(skeleton.parents[j])
        off = dc.reshape(offsets[..., j, :], batch + (3, 1))
        moved = dc.reshape(dc.matmul(global_rot[p], off), batch + (3,))
        pos[j] = pos[p] + moved
        ridx = int(skeleton.rotation_index[j])
        if ridx > 0:
            global_rot[j] = dc.matmul(global_rot[p], rot[(Ellipsis, ridx) + key[1:]])
        else:
            global_rot[j] = global_rot[p]

    rows = [dc.reshape(pj, batch + (1, 3)) for pj in pos]
    return dc.concat(rows, axis=-2)


def forward_kinematics(psi, assets: ModelAssets, camera: Camera,
                       reference_focal: float = DEFAULT_REFERENCE_FOCAL) -> Tensor:
    """Camera-frame 3D keypoints (..., n_keypoints, 3) in mm for a flat pose (..., pose_dim)."""
    psi = dc.as_tensor(psi)
    if psi.shape[-1] != assets.pose_dim:
        raise dc.ContractError(f"pose dim {psi.shape[-1]} != expected {assets.pose_dim}")
    if not np.all(np.isfinite(psi.data)):
        raise dc.NumericError("non-finite pose parameters")
    parts = []
    for h, skeleton in enumerate(assets.hands):
        off = assets.hand_offset(h)
        block = psi[..., off : off + assets.hand_dim(h)]
        parts.append(_hand_keypoints(block, skeleton, camera, reference_focal))
    if len(parts) == 1:
        return parts[0]
    return dc.concat(parts, axis=-2)


def project(points, camera: Camera) -> Tensor:
    """Differentiable pinhole projection of camera-frame points (..., 3) -> pixels (..., 2)."""
    points = dc.as_tensor(points)
    z = points[..., 2:3]
    if np.any(z.data <= 0):
        raise BehindCameraError("projection requires positive depth")
    u = dc.div(points[..., 0:1], z) * float(camera.focal[0]) + float(camera.principal[0])
    v = dc.div(points[..., 1:2], z) * float(camera.focal[1]) + float(camera.principal[1])
    return dc.concat([u, v], axis=-1)


def keypoints_np(psi: np.ndarray, assets: ModelAssets, camera: Camera,
                 reference_focal: float = DEFAULT_REFERENCE_FOCAL) -> np.ndarray:
    """Plain-array forward kinematics (no graph recording)."""
    with dc.no_grad():
        return forward_kinematics(np.asarray(psi, dtype=np.float64), assets, camera,
                                  reference_focal).data
