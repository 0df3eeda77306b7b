"""Synthetic two-hand skeleton, Gaussian bone proxies, and asset file I/O.

The skeleton is a stand-in for a licensed parametric hand asset with matching
interfaces: 21 keypoints per hand (wrist + 4 keypoints per finger, the
fingertip being a rotation-free leaf), 16 rotations per hand (index 0 is the
global hand rotation), and a 10-dimensional linear bone-length shape basis.

Assets round-trip through a versioned human-readable JSON file
(``"format": "skeleton.v1"``) holding, per hand: parent indices, rest bone
offsets (mm), rotation indices, shape coefficients; plus the proxy list and
the fitted articulation PCA prior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import BETA_DIM, JOINTS_PER_HAND, NUM_ROTATIONS
from .prior import PcaPrior

ASSET_FORMAT = "skeleton.v1"

FINGERS = ("thumb", "index", "middle", "ring", "pinky")

KEYPOINT_NAMES = ["wrist"] + [
    f"{finger}_{part}" for finger in FINGERS for part in ("mcp", "pip", "dip", "tip")
]


@dataclass
class HandSkeleton:
    """Rooted keypoint tree of one hand with a linear bone-length shape basis.

    ``rotation_index[j]`` selects which rotation applies *at* keypoint j:
    0 is the global rotation (root only), -1 means no rotation (fingertips).
    ``shape_coeffs[j, k]`` scales bone j's rest offset by ``1 + beta_k * coeff``.
    """

    parents: np.ndarray  # (n_kp,), -1 at the root
    rest_offsets: np.ndarray  # (n_kp, 3) mm, zero at the root
    rotation_index: np.ndarray  # (n_kp,)
    shape_coeffs: np.ndarray  # (n_kp, beta_dim)
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.rest_offsets = np.asarray(self.rest_offsets, dtype=np.float64)
        self.rotation_index = np.asarray(self.rotation_index, dtype=np.int64)
        self.shape_coeffs = np.asarray(self.shape_coeffs, dtype=np.float64)
        n = self.parents.shape[0]
        if self.rest_offsets.shape != (n, 3):
            raise ValueError("rest_offsets shape mismatch")
        roots = np.flatnonzero(self.parents < 0)
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("skeleton must have exactly one root at index 0")
        for j in range(1, n):
            if not 0 <= self.parents[j] < j:
                raise ValueError("parents must be topologically ordered (parent index < child)")

    @property
    def n_keypoints(self) -> int:
        return self.parents.shape[0]

    @property
    def n_rotations(self) -> int:
        return int(self.rotation_index.max()) + 1

    @property
    def beta_dim(self) -> int:
        return self.shape_coeffs.shape[1]

    def rest_keypoints(self) -> np.ndarray:
        """Keypoints of the zero-shape rest pose, root at the origin."""
        pos = np.zeros((self.n_keypoints, 3))
        for j in range(1, self.n_keypoints):
            pos[j] = pos[self.parents[j]] + self.rest_offsets[j]
        return pos

    def to_dict(self) -> dict:
        return {
            "parents": self.parents.tolist(),
            "rest_offsets": self.rest_offsets.tolist(),
            "rotation_index": self.rotation_index.tolist(),
            "shape_coeffs": self.shape_coeffs.tolist(),
            "names": list(self.names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HandSkeleton":
        return cls(
            parents=np.array(d["parents"]),
            rest_offsets=np.array(d["rest_offsets"]),
            rotation_index=np.array(d["rotation_index"]),
            shape_coeffs=np.array(d["shape_coeffs"]),
            names=list(d.get("names", [])),
        )


@dataclass
class GaussianProxy:
    """Isotropic Gaussian attached to a bone; its 1-sigma sphere is the solid proxy."""

    hand: int  # 0 right, 1 left
    bone: int  # child keypoint index within the hand; bone = parent(bone) -> bone
    frac: float  # position along the bone, 0 at parent, 1 at child
    std: float  # mm

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("proxy std must be positive")

    def to_dict(self) -> dict:
        return {"hand": self.hand, "bone": self.bone, "frac": self.frac, "std": self.std}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianProxy":
        return cls(hand=int(d["hand"]), bone=int(d["bone"]), frac=float(d["frac"]), std=float(d["std"]))


@dataclass
class ModelAssets:
    """Bundle of per-hand skeletons, collision/occlusion proxies, and pose priors."""

    hands: list[HandSkeleton]
    proxies: list[GaussianProxy] = field(default_factory=list)
    priors: list[PcaPrior] | None = None

    @property
    def n_hands(self) -> int:
        return len(self.hands)

    @property
    def n_keypoints(self) -> int:
        return sum(h.n_keypoints for h in self.hands)

    def hand_dim(self, hand: int) -> int:
        sk = self.hands[hand]
        return sk.n_rotations * 6 + sk.beta_dim + 3

    @property
    def pose_dim(self) -> int:
        return sum(self.hand_dim(h) for h in range(self.n_hands))

    def hand_offset(self, hand: int) -> int:
        return sum(self.hand_dim(h) for h in range(hand))

    def keypoint_offset(self, hand: int) -> int:
        return sum(self.hands[h].n_keypoints for h in range(hand))

    def proxy_attachment(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Global (parent_idx, child_idx, frac, std) arrays for all proxies."""
        par, chd, frac, std = [], [], [], []
        for p in self.proxies:
            off = self.keypoint_offset(p.hand)
            sk = self.hands[p.hand]
            par.append(off + sk.parents[p.bone])
            chd.append(off + p.bone)
            frac.append(p.frac)
            std.append(p.std)
        return (np.array(par, dtype=np.int64), np.array(chd, dtype=np.int64),
                np.array(frac, dtype=np.float64), np.array(std, dtype=np.float64))

    def to_dict(self) -> dict:
        return {
            "format": ASSET_FORMAT,
            "hands": [h.to_dict() for h in self.hands],
            "proxies": [p.to_dict() for p in self.proxies],
            "priors": None if self.priors is None else [pr.to_dict() for pr in self.priors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelAssets":
        if d.get("format") != ASSET_FORMAT:
            raise ValueError(f"unsupported asset format {d.get('format')!r}")
        priors = d.get("priors")
        return cls(
            hands=[HandSkeleton.from_dict(h) for h in d["hands"]],
            proxies=[GaussianProxy.from_dict(p) for p in d.get("proxies", [])],
            priors=None if priors is None else [PcaPrior.from_dict(p) for p in priors],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ModelAssets":
        return cls.from_dict(json.loads(Path(path).read_text()))


# rest bone offsets of the right hand, mm; left hand mirrors y
_FINGER_OFFSETS = {
    "thumb": [(28.0, -32.0, 8.0), (32.0, -18.0, 4.0), (26.0, -10.0, 2.0), (22.0, -8.0, 0.0)],
    "index": [(82.0, -24.0, 2.0), (42.0, -3.0, 0.0), (26.0, -2.0, 0.0), (21.0, -1.0, 0.0)],
    "middle": [(84.0, 0.0, 0.0), (46.0, 0.0, 0.0), (29.0, 0.0, 0.0), (23.0, 0.0, 0.0)],
    "ring": [(78.0, 22.0, 0.0), (42.0, 3.0, 0.0), (27.0, 2.0, 0.0), (22.0, 1.0, 0.0)],
    "pinky": [(70.0, 40.0, 2.0), (32.0, 5.0, 0.0), (21.0, 3.0, 0.0), (18.0, 2.0, 0.0)],
}

# per-bone proxy radii by segment depth (mcp bone carries the palm mass)
_PROXY_STD = {"mcp": 13.0, "pip": 9.0, "dip": 7.0, "tip": 6.0}


def _build_hand_skeleton(mirror_y: bool) -> HandSkeleton:
    parents = [-1]
    offsets = [(0.0, 0.0, 0.0)]
    rot_index = [0]
    rot = 1
    for finger in FINGERS:
        base = 0  # fingers chain off the wrist
        segs = _FINGER_OFFSETS[finger]
        for k, off in enumerate(segs):
            parents.append(base if k == 0 else len(parents) - 1)
            offsets.append(off)
            if k < 3:
                rot_index.append(rot)
                rot += 1
            else:
                rot_index.append(-1)  # fingertip leaf
    offsets = np.array(offsets, dtype=np.float64)
    if mirror_y:
        offsets[:, 1] *= -1.0

    n = len(parents)
    coeffs = np.zeros((n, BETA_DIM))
    coeffs[1:, 0] = 0.030  # overall size
    for f, finger in enumerate(FINGERS):
        base = 1 + 4 * f
        coeffs[base, 2] = 0.030  # palm span
        coeffs[base + 1 : base + 4, 1] = 0.030  # finger length
        coeffs[base : base + 4, 3 + f] = 0.020  # per-finger factor
        coeffs[base + 2 : base + 4, 8] = 0.015  # distal taper
    coeffs[1:5, 9] = 0.010  # thumb extra

    assert rot == NUM_ROTATIONS
    assert n == JOINTS_PER_HAND
    return HandSkeleton(
        parents=np.array(parents),
        rest_offsets=offsets,
        rotation_index=np.array(rot_index),
        shape_coeffs=coeffs,
        names=list(KEYPOINT_NAMES),
    )


def _build_proxies() -> list[GaussianProxy]:
    proxies = []
    for hand in (0, 1):
        for f in range(len(FINGERS)):
            base = 1 + 4 * f
            for k, part in enumerate(("mcp", "pip", "dip", "tip")):
                proxies.append(GaussianProxy(hand=hand, bone=base + k, frac=0.5, std=_PROXY_STD[part]))
    return proxies


def default_two_hand_assets(priors: list[PcaPrior] | None = None) -> ModelAssets:
    """The standard 42-keypoint two-hand model (right = hand 0, left = hand 1)."""
    return ModelAssets(
        hands=[_build_hand_skeleton(mirror_y=False), _build_hand_skeleton(mirror_y=True)],
        proxies=_build_proxies(),
        priors=priors,
    )
