"""Feature extraction from 2D observations.

An observation is the set of projected keypoints plus their visibility
flags. Keypoint pixels are normalized to [-1, 1] by half the virtual crop
size around the principal point, zeroed where invisible (so whatever
sentinel an invisible entry carries can never influence the output), and
concatenated with the mask itself. A small tanh MLP maps this to the
conditioning feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .norm import DEFAULT_CROP

__all__ = ["Observation", "FeatureConfig", "encode_observation", "init_feature_params",
           "extract_features"]


@dataclass
class Observation:
    """Per-frame conditioning input; invisible joints2d entries hold a sentinel."""

    joints2d: np.ndarray  # (n_kp, 2) pixels
    visibility: np.ndarray  # (n_kp,) bool
    cam_id: str = "cam00"

    def __post_init__(self):
        self.joints2d = np.asarray(self.joints2d, dtype=np.float64)
        self.visibility = np.asarray(self.visibility, dtype=bool)


@dataclass(frozen=True)
class FeatureConfig:
    n_keypoints: int = 42
    hidden: tuple[int, ...] = (128, 128)
    out_dim: int = 128

    @property
    def in_dim(self) -> int:
        return 3 * self.n_keypoints  # 2 coords + 1 mask bit per keypoint

    def to_dict(self) -> dict:
        return {"n_keypoints": self.n_keypoints, "hidden": list(self.hidden),
                "out_dim": self.out_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(n_keypoints=int(d["n_keypoints"]), hidden=tuple(d["hidden"]),
                   out_dim=int(d["out_dim"]))


def encode_observation(obs: Observation, principal: np.ndarray,
                       crop: float = DEFAULT_CROP) -> np.ndarray:
    """Flat network input: [masked normalized pixels (2n), mask (n)]."""
    principal = np.asarray(principal, dtype=np.float64).reshape(2)
    mask = obs.visibility.astype(np.float64)
    norm = (obs.joints2d - principal) / (crop / 2.0)
    norm = norm * mask[:, None]  # sentinel values in masked-out rows vanish here
    return np.concatenate([norm.reshape(-1), mask])


def init_feature_params(cfg: FeatureConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    sizes = (cfg.in_dim,) + tuple(cfg.hidden) + (cfg.out_dim,)
    for i in range(len(sizes) - 1):
        n_in, n_out = sizes[i], sizes[i + 1]
        params[f"feat.W{i}"] = Tensor(rng.normal(scale=np.sqrt(1.0 / n_in), size=(n_in, n_out)),
                                      requires_grad=True)
        params[f"feat.b{i}"] = Tensor(np.zeros(n_out), requires_grad=True)
    return params


def extract_features(obs_vec, params: dict[str, Tensor], cfg: FeatureConfig) -> Tensor:
    """Conditioning vector v from an encoded observation; tanh MLP, linear head."""
    x = dc.as_tensor(obs_vec)
    n_layers = len(cfg.hidden) + 1
    for i in range(n_layers):
        x = dc.matmul(x, params[f"feat.W{i}"]) + params[f"feat.b{i}"]
        if i < n_layers - 1:
            x = dc.tanh(x)
    return x
