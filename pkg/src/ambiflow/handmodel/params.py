"""Two-hand pose parameter layout.

A single hand is parameterized by 16 rotations in the 6D representation
(the first one is the global hand rotation), 10 shape coefficients, a 2D
root position in pixels, and a positive perspective scale factor:

    hand vector (109) = [theta (16x6, row-major) | beta (10) | t (2) | s (1)]

The two-hand vector concatenates right then left: ``[right | left]`` (218).
Each 6-entry rotation row holds the two frame columns ``[a1 (3) | a2 (3)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NUM_ROTATIONS = 16
ROT6D_DIM = 6
THETA_DIM = NUM_ROTATIONS * ROT6D_DIM  # 96
BETA_DIM = 10
HAND_DIM = THETA_DIM + BETA_DIM + 2 + 1  # 109
POSE_DIM = 2 * HAND_DIM  # 218

JOINTS_PER_HAND = 21
NUM_JOINTS = 2 * JOINTS_PER_HAND  # 42
RIGHT_ROOT = 0
LEFT_ROOT = JOINTS_PER_HAND

THETA_SLICE = slice(0, THETA_DIM)
BETA_SLICE = slice(THETA_DIM, THETA_DIM + BETA_DIM)
T_SLICE = slice(THETA_DIM + BETA_DIM, THETA_DIM + BETA_DIM + 2)
S_INDEX = THETA_DIM + BETA_DIM + 2  # 108 within a hand block

# articulation = the 15 non-global rotations (entries 6..96 of a hand block)
ARTICULATION_SLICE = slice(ROT6D_DIM, THETA_DIM)
ARTICULATION_DIM = THETA_DIM - ROT6D_DIM  # 90

IDENTITY_ROT6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


@dataclass
class HandParams:
    """Parameters of one hand; see module docstring for the flat layout."""

    theta: np.ndarray  # (16, 6)
    beta: np.ndarray  # (10,)
    t: np.ndarray  # (2,) pixels
    s: float  # > 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(NUM_ROTATIONS, ROT6D_DIM)
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(BETA_DIM)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(2)
        self.s = float(self.s)
        if not self.s > 0:
            raise ValueError(f"perspective scale must be positive, got {self.s}")

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.theta.reshape(-1), self.beta, self.t, [self.s]])

    @classmethod
    def from_flat(cls, vec: np.ndarray) -> "HandParams":
        vec = np.asarray(vec, dtype=np.float64).reshape(HAND_DIM)
        return cls(
            theta=vec[THETA_SLICE].reshape(NUM_ROTATIONS, ROT6D_DIM),
            beta=vec[BETA_SLICE],
            t=vec[T_SLICE],
            s=vec[S_INDEX],
        )

    @classmethod
    def rest(cls, t=(0.0, 0.0), s: float = 1.0) -> "HandParams":
        theta = np.tile(IDENTITY_ROT6D, (NUM_ROTATIONS, 1))
        return cls(theta=theta, beta=np.zeros(BETA_DIM), t=np.asarray(t, dtype=np.float64), s=s)


@dataclass
class PoseParams:
    """Full two-hand parameter vector; flattens to 218 reals, right then left."""

    right: HandParams
    left: HandParams

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.right.flatten(), self.left.flatten()])

    @classmethod
    def from_flat(cls, vec: np.ndarray) -> "PoseParams":
        vec = np.asarray(vec, dtype=np.float64).reshape(POSE_DIM)
        return cls(
            right=HandParams.from_flat(vec[:HAND_DIM]),
            left=HandParams.from_flat(vec[HAND_DIM:]),
        )

    @classmethod
    def rest(cls) -> "PoseParams":
        return cls(right=HandParams.rest(), left=HandParams.rest())


def hand_block(flat: np.ndarray, hand: int) -> np.ndarray:
    """View of one hand's 109 entries in a flattened pose (0 = right, 1 = left)."""
    off = hand * HAND_DIM
    return np.asarray(flat)[..., off : off + HAND_DIM]


def articulation(flat: np.ndarray, hand: int) -> np.ndarray:
    """The 90 non-global 6D rotation entries of one hand, from a flat pose."""
    block = hand_block(flat, hand)
    return block[..., ARTICULATION_SLICE]


def articulation_indices(hand: int) -> np.ndarray:
    """Flat-pose indices of one hand's articulation entries."""
    off = hand * HAND_DIM
    return np.arange(off + ARTICULATION_SLICE.start, off + ARTICULATION_SLICE.stop)


def scale_index(hand: int) -> int:
    return hand * HAND_DIM + S_INDEX
