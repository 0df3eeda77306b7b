"""Loss terms for distribution-supervised pose training.

Six terms combine into the training objective:

* ``loss_nll``       mean negative log-likelihood of the pose annotations
* ``loss_detmag``    determinant-magnitude regularizer: -ln|det df_v/dz| at the
                     annotations' latents; rewards volume expansion to counter
                     the density collapse the NLL alone induces. The
                     conditioning vector enters through a gradient barrier so
                     this term never backpropagates into the feature extractor.
* ``loss_mode``      squared error of the designated mode sample f_v(0)
* ``loss_j3d``       squared 3D keypoint error of the evaluated poses (mm^2)
* ``loss_j2d``       visibility-masked squared pixel error of the projections
* ``loss_theta``     orthonormality penalty on all 6D rotation blocks

``loss_j3d``, ``loss_j2d`` and ``loss_theta`` are evaluated on the mode plus
two fresh flow samples, drawn anew each step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..flow.model import LOG_2PI, ConditionedFlow
from ..handmodel.camera import Camera
from ..handmodel.kinematics import DEFAULT_REFERENCE_FOCAL, forward_kinematics
from ..handmodel.skeleton import ModelAssets
from .features import FeatureConfig, Observation, encode_observation, extract_features
from .norm import PoseNorm

log = logging.getLogger(__name__)

__all__ = [
    "LossWeights",
    "TrainingSample",
    "loss_nll",
    "loss_detmag",
    "loss_mode",
    "loss_j3d",
    "loss_j2d",
    "loss_theta",
    "total_loss",
    "total_loss_graph",
    "mode_annotation_index",
]


@dataclass(frozen=True)
class LossWeights:
    nll: float = 1.0
    detmag: float = 1.0
    psi: float = 1.0
    j3d: float = 0.0025
    j2d: float = 0.0025
    theta: float = 0.1

    def __post_init__(self):
        vals = (self.nll, self.detmag, self.psi, self.j3d, self.j2d, self.theta)
        if any(w < 0 for w in vals):
            raise ValueError("loss weights must be non-negative")
        if not any(w > 0 for w in vals):
            raise ValueError("at least one loss weight must be positive")

    def to_dict(self) -> dict:
        return {"nll": self.nll, "detmag": self.detmag, "psi": self.psi,
                "j3d": self.j3d, "j2d": self.j2d, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class TrainingSample:
    """One (frame, camera) record prepared for training.

    ``annotations`` may be empty: such samples contribute to the keypoint
    losses only (their likelihood/mode terms are skipped). ``mode_index``
    designates which annotation acts as the mode target; it is fixed for
    the lifetime of the dataset.
    """

    frame_id: str
    observation: Observation
    camera: Camera
    joints3d: np.ndarray  # (n_kp, 3) camera frame, mm
    annotations: np.ndarray  # (M, pose_dim) raw psi vectors, M >= 0
    mode_index: int | None = None

    def __post_init__(self):
        self.joints3d = np.asarray(self.joints3d, dtype=np.float64)
        self.annotations = np.asarray(self.annotations, dtype=np.float64)
        if self.annotations.size == 0:
            self.annotations = self.annotations.reshape(0, 0)
        if len(self.annotations) and self.mode_index is None:
            raise ValueError("annotated samples need a designated mode_index")
        if self.mode_index is not None and len(self.annotations):
            if not 0 <= self.mode_index < len(self.annotations):
                raise ValueError("mode_index out of range")


def mode_annotation_index(frame_id: str, seed: int, n_annotations: int) -> int:
    """Deterministic pick of the mode annotation: seeded hash of the frame id."""
    import hashlib

    digest = hashlib.sha256(f"{seed}:{frame_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % n_annotations


def _gaussian_log_prob(z: Tensor, dim: int) -> Tensor:
    return dc.sum_(dc.square(z), axis=-1) * (-0.5) - 0.5 * dim * LOG_2PI


def loss_nll(annotations: np.ndarray, v: Tensor, flow: ConditionedFlow,
             norm: PoseNorm) -> Tensor:
    """Mean over annotations of -log p(psi* | v)."""
    if len(annotations) == 0:
        raise ValueError("loss_nll requires at least one annotation")
    ann_norm = norm.normalize(annotations)
    return -dc.mean_(flow.log_prob(ann_norm, v))


def loss_detmag(annotations: np.ndarray, v: Tensor, flow: ConditionedFlow,
                norm: PoseNorm) -> Tensor:
    """-ln|det df_v/dz| at each annotation's latent, averaged.

    Equal to +log|det| of the inverse map at the annotation. The feature
    vector passes through a gradient barrier: expanding the distribution is
    the flow's job, not the extractor's.
    """
    if len(annotations) == 0:
        raise ValueError("loss_detmag requires at least one annotation")
    ann_norm = norm.normalize(annotations)
    _, logdet_inv = flow.inverse(ann_norm, dc.stop_gradient(v))
    return dc.mean_(logdet_inv)


def loss_mode(mode_annotation: np.ndarray, v: Tensor, flow: ConditionedFlow,
              norm: PoseNorm) -> Tensor:
    """Squared distance between the raw-space mode sample f_v(0) and its target."""
    mode = norm.unnormalize_t(flow.mode(v))
    return dc.sumsq(mode - np.asarray(mode_annotation, dtype=np.float64))


def loss_j3d(psi_set: Tensor, joints3d: np.ndarray, assets: ModelAssets, camera: Camera,
             reference_focal: float = DEFAULT_REFERENCE_FOCAL) -> Tensor:
    """Sum over keypoints of squared 3D error (mm^2), averaged over the pose set."""
    joints = forward_kinematics(psi_set, assets, camera, reference_focal)
    target = dc.tile_rows(Tensor(np.asarray(joints3d, dtype=np.float64).reshape(-1)),
                          psi_set.shape[:-1])
    target = dc.reshape(target, joints.shape)
    per_pose = dc.sum_(dc.square(joints - target), axis=(-1, -2))
    return dc.mean_(per_pose)


def loss_j2d(psi_set: Tensor, joints2d: np.ndarray, visibility: np.ndarray,
             assets: ModelAssets, camera: Camera,
             reference_focal: float = DEFAULT_REFERENCE_FOCAL) -> Tensor:
    """Visible-keypoint squared pixel error, summed over keypoints, averaged over poses.

    Keypoints that land behind the camera during training are excluded from
    the sum (with a warning) rather than raising; this is transient early on.
    """
    joints = forward_kinematics(psi_set, assets, camera, reference_focal)
    z = joints[..., 2:3]
    front = (z.data > 1e-6).astype(np.float64)
    eta = np.asarray(visibility, dtype=np.float64)
    weights = front[..., 0] * eta  # (..., n_kp)
    if np.any((front[..., 0] == 0.0) & (eta > 0.0)):
        log.warning("keypoints behind the camera excluded from 2D consistency loss")

    safe_z = z * Tensor(front) + Tensor(1.0 - front)
    xy = joints[..., 0:2]
    fx = Tensor(np.array([camera.focal[0], camera.focal[1]]))
    cx = Tensor(np.array([camera.principal[0], camera.principal[1]]))
    scale = dc.reshape(dc.tile_rows(fx, xy.shape[:-1]), xy.shape)
    offset = dc.reshape(dc.tile_rows(cx, xy.shape[:-1]), xy.shape)
    uv = dc.div(xy, dc.concat([safe_z, safe_z], axis=-1)) * scale + offset

    target = np.broadcast_to(np.asarray(joints2d, dtype=np.float64), uv.shape).copy()
    err = dc.sum_(dc.square(uv - Tensor(target)), axis=-1)  # (..., n_kp)
    per_pose = dc.sum_(err * Tensor(weights), axis=-1)
    return dc.mean_(per_pose)


def loss_theta(psi: Tensor, assets: ModelAssets) -> Tensor:
    """Sum over all 6D rotation blocks of ||A^T A - I||_F^2; mean over any batch."""
    psi = dc.as_tensor(psi)
    batch = psi.shape[:-1]
    total = None
    for h, skeleton in enumerate(assets.hands):
        off = assets.hand_offset(h)
        n_rot = skeleton.n_rotations
        theta = dc.reshape(psi[..., off : off + n_rot * 6], batch + (n_rot, 6))
        a1, a2 = theta[..., 0:3], theta[..., 3:6]
        e11 = dc.sum_(dc.square(a1), axis=-1)
        e22 = dc.sum_(dc.square(a2), axis=-1)
        e12 = dc.sum_(a1 * a2, axis=-1)
        frob = dc.square(e11 - 1.0) + dc.square(e22 - 1.0) + 2.0 * dc.square(e12)
        contrib = dc.sum_(frob, axis=-1)  # over rotation blocks
        total = contrib if total is None else total + contrib
    if total.ndim > 0:
        total = dc.mean_(total)
    return total


def _select_annotations(annotations: np.ndarray, cap: int, rng: np.random.Generator
                        ) -> np.ndarray:
    if len(annotations) <= cap:
        return annotations
    idx = rng.choice(len(annotations), size=cap, replace=False)
    return annotations[np.sort(idx)]


def total_loss_graph(sample: TrainingSample, weights: LossWeights, flow: ConditionedFlow,
                     feat_params: dict[str, Tensor], feat_cfg: FeatureConfig,
                     assets: ModelAssets, norm: PoseNorm, rng: np.random.Generator,
                     ann_cap: int = 8, crop: float = 224.0,
                     reference_focal: float = DEFAULT_REFERENCE_FOCAL,
                     z_samples: np.ndarray | None = None
                     ) -> tuple[Tensor, dict[str, float]]:
    """Build the weighted loss graph for one sample; returns (loss, term values).

    Samples without annotations contribute nothing to the likelihood, det-mag
    and mode terms. ``z_samples`` overrides the two fresh latents (testing).
    """
    obs_vec = encode_observation(sample.observation, sample.camera.principal, crop)
    v = extract_features(obs_vec, feat_params, feat_cfg)

    terms: dict[str, float] = {}
    total: Tensor | None = None

    def add_term(name: str, weight: float, value: Tensor | None):
        nonlocal total
        terms[name] = float("nan") if value is None else value.item()
        if value is None or weight == 0.0:
            return
        piece = value * weight
        total = piece if total is None else total + piece

    has_annotations = len(sample.annotations) > 0
    if has_annotations:
        subset = _select_annotations(sample.annotations, ann_cap, rng)
        add_term("nll", weights.nll, loss_nll(subset, v, flow, norm))
        add_term("detmag", weights.detmag, loss_detmag(subset, v, flow, norm))
    else:
        add_term("nll", weights.nll, None)
        add_term("detmag", weights.detmag, None)

    # evaluation set: mode plus two fresh samples, one batched pass
    if z_samples is None:
        z_samples = rng.standard_normal((2, flow.config.dim))
    z_eval = np.concatenate([np.zeros((1, flow.config.dim)), z_samples], axis=0)
    psi_norm_set, _ = flow.forward(z_eval, v)
    psi_set = norm.unnormalize_t(psi_norm_set)

    if has_annotations:
        mode_target = sample.annotations[sample.mode_index]
        add_term("psi", weights.psi, dc.sumsq(psi_set[0, :] - mode_target))
    else:
        add_term("psi", weights.psi, None)

    add_term("j3d", weights.j3d, loss_j3d(psi_set, sample.joints3d, assets, sample.camera,
                                          reference_focal))
    add_term("j2d", weights.j2d, loss_j2d(psi_set, sample.observation.joints2d,
                                          sample.observation.visibility, assets,
                                          sample.camera, reference_focal))
    add_term("theta", weights.theta, loss_theta(psi_set, assets))

    if total is None:
        total = Tensor(0.0)
    terms["total"] = total.item()
    return total, terms


def total_loss(sample: TrainingSample, weights: LossWeights, flow: ConditionedFlow,
               feat_params: dict[str, Tensor], feat_cfg: FeatureConfig,
               assets: ModelAssets, norm: PoseNorm, rng: np.random.Generator,
               **kwargs) -> tuple[float, dict[Tensor, np.ndarray], dict[str, float]]:
    """Loss value, gradient map over all leaves, and per-term values."""
    loss, terms = total_loss_graph(sample, weights, flow, feat_params, feat_cfg,
                                   assets, norm, rng, **kwargs)
    grads = dc.backward(loss)
    return loss.item(), grads, terms
