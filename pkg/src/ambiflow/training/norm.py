"""Fixed affine map between raw pose vectors and the flow's working coordinates.

Raw pose entries live on very different scales (6D rotation entries ~1, root
pixels ~100, perspective scale ~1); the flow trains in normalized coordinates
where each group is O(1). The map is fixed and documented, never fit to data:
rotation and shape entries pass through unchanged, root pixels are centered
on the principal point and divided by half the virtual crop size, and the
scale factor is centered/scaled by configurable constants.

Log-densities reported by the flow are densities over these normalized
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..handmodel.skeleton import ModelAssets

__all__ = ["PoseNorm", "build_pose_norm", "DEFAULT_CROP"]

DEFAULT_CROP = 224.0


@dataclass
class PoseNorm:
    center: np.ndarray  # (pose_dim,)
    scale: np.ndarray  # (pose_dim,), > 0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if np.any(self.scale <= 0):
            raise ValueError("normalization scales must be positive")

    def normalize(self, psi: np.ndarray) -> np.ndarray:
        return (np.asarray(psi, dtype=np.float64) - self.center) / self.scale

    def unnormalize(self, psi_norm: np.ndarray) -> np.ndarray:
        return np.asarray(psi_norm, dtype=np.float64) * self.scale + self.center

    def unnormalize_t(self, psi_norm: Tensor) -> Tensor:
        """Differentiable unnormalization for graph-valued poses."""
        batch = psi_norm.shape[:-1]
        scale = dc.tile_rows(Tensor(self.scale), batch)
        center = dc.tile_rows(Tensor(self.center), batch)
        return psi_norm * scale + center

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PoseNorm":
        return cls(center=np.array(d["center"]), scale=np.array(d["scale"]))


def build_pose_norm(assets: ModelAssets, principal: np.ndarray, crop: float = DEFAULT_CROP,
                    s_center: float = 1.0, s_scale: float = 0.25) -> PoseNorm:
    """Rotation blocks center on the identity rotation, so the normalized zero
    vector decodes to a neutral rest pose at the principal point."""
    identity_rot6d = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    principal = np.asarray(principal, dtype=np.float64).reshape(2)
    center = np.zeros(assets.pose_dim)
    scale = np.ones(assets.pose_dim)
    for h in range(assets.n_hands):
        off = assets.hand_offset(h)
        dim = assets.hand_dim(h)
        n_rot = assets.hands[h].n_rotations
        center[off : off + n_rot * 6] = np.tile(identity_rot6d, n_rot)
        t0 = off + dim - 3
        center[t0 : t0 + 2] = principal
        scale[t0 : t0 + 2] = crop / 2.0
        center[off + dim - 1] = s_center
        scale[off + dim - 1] = s_scale
    return PoseNorm(center=center, scale=scale)
