"""Pinhole camera with world->camera extrinsics (millimetres, pixels)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BehindCameraError(ValueError):
    """A point with non-positive depth was projected."""


@dataclass
class Camera:
    focal: np.ndarray  # (2,) pixels
    principal: np.ndarray  # (2,) pixels
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))  # world->cam
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))  # mm
    cam_id: str = "cam00"

    def __post_init__(self):
        self.focal = np.asarray(self.focal, dtype=np.float64).reshape(2)
        self.principal = np.asarray(self.principal, dtype=np.float64).reshape(2)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(self.focal > 0):
            raise ValueError("focal lengths must be positive")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"extrinsic rotation not orthonormal (max dev {err:.2e})")

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def cam_to_world(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation

    def project_np(self, points: np.ndarray) -> np.ndarray:
        """Pinhole projection of camera-frame points; raises behind the camera."""
        points = np.asarray(points, dtype=np.float64)
        z = points[..., 2]
        if not np.all(z > 0):
            raise BehindCameraError("projection requires positive depth")
        return self.focal * points[..., :2] / z[..., None] + self.principal

    def to_dict(self) -> dict:
        return {
            "cam_id": self.cam_id,
            "focal": self.focal.tolist(),
            "principal": self.principal.tolist(),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            focal=np.array(d["focal"]),
            principal=np.array(d["principal"]),
            rotation=np.array(d["rotation"]),
            translation=np.array(d["translation"]),
            cam_id=d.get("cam_id", "cam00"),
        )


def look_at_camera(position, target, focal, principal, cam_id="cam00", up=(0.0, 0.0, 1.0)) -> Camera:
    """Camera at ``position`` looking toward ``target``; +z forward, +y image-down."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z_axis = target - position
    z_axis = z_axis / np.linalg.norm(z_axis)
    x_axis = np.cross(z_axis, up)
    nx = np.linalg.norm(x_axis)
    if nx < 1e-9:  # looking along up; pick an arbitrary right vector
        x_axis = np.cross(z_axis, np.array([0.0, 1.0, 0.0]))
        nx = np.linalg.norm(x_axis)
    x_axis = x_axis / nx
    y_axis = np.cross(z_axis, x_axis)
    rotation = np.stack([x_axis, y_axis, z_axis], axis=0)
    translation = -rotation @ position
    return Camera(focal=np.asarray(focal, dtype=np.float64).reshape(2),
                  principal=np.asarray(principal, dtype=np.float64).reshape(2),
                  rotation=rotation, translation=translation, cam_id=cam_id)
