"""Shared fixtures: the standard two-hand model, a reduced d=10 model, oracles."""

from __future__ import annotations

import numpy as np
import pytest

from ambiflow import handmodel as hm
from ambiflow.flow import FlowConfig
from ambiflow.training import FeatureConfig, build_pose_norm


def central_diff(f, x, h=1e-5):
    """Central finite differences of a scalar function over a flat array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        gflat[i] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (2 * h)
    return grad


def max_rel_err(got, ref, floor=1e-8):
    got = np.asarray(got, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    return float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), floor)))


@pytest.fixture(scope="session")
def assets():
    return hm.default_two_hand_assets()


@pytest.fixture(scope="session")
def camera():
    return hm.Camera(focal=[800.0, 800.0], principal=[224.0, 224.0])


@pytest.fixture(scope="session")
def ref_focal():
    return 800.0


@pytest.fixture(scope="session")
def rest_pose(camera):
    """Two rest-pose hands in front of the camera, far enough apart in the
    image that neither occludes the other (occlusion margin > 10 mm)."""
    pose = hm.PoseParams.rest()
    pose.right.t[:] = [190.0, 230.0]
    pose.left.t[:] = [360.0, 150.0]
    pose.right.s = 1.05
    pose.left.s = 0.95
    return pose.flatten()


def perturbed_pose(rest_flat, seed=0, rot_scale=0.05):
    rng = np.random.default_rng(seed)
    flat = rest_flat.copy()
    for hand in (0, 1):
        idx = hm.articulation_indices(hand)
        flat[idx] += rng.normal(scale=rot_scale, size=len(idx))
    return flat


# -- reduced d=10 model for composite gradient checks ------------------------


def build_mini_assets() -> hm.ModelAssets:
    """One 5-keypoint chain with a single (global) rotation and 1 shape dim: dim 10."""
    skeleton = hm.HandSkeleton(
        parents=np.array([-1, 0, 1, 2, 3]),
        rest_offsets=np.array([
            [0.0, 0.0, 0.0],
            [30.0, 0.0, 0.0],
            [25.0, 5.0, 0.0],
            [20.0, -3.0, 2.0],
            [15.0, 0.0, -2.0],
        ]),
        rotation_index=np.array([0, -1, -1, -1, -1]),
        shape_coeffs=np.array([[0.0], [0.05], [0.04], [0.05], [0.03]]),
    )
    return hm.ModelAssets(hands=[skeleton], proxies=[], priors=None)


@pytest.fixture(scope="session")
def mini_assets():
    assets = build_mini_assets()
    assert assets.pose_dim == 10
    return assets


@pytest.fixture(scope="session")
def mini_flow_config():
    return FlowConfig(dim=10, cond_dim=6, blocks=2, hidden=8)


@pytest.fixture(scope="session")
def mini_feat_config():
    return FeatureConfig(n_keypoints=5, hidden=(8,), out_dim=6)


@pytest.fixture(scope="session")
def mini_norm(mini_assets, camera):
    return build_pose_norm(mini_assets, camera.principal)
