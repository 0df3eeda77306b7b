"""Line-delimited dataset files (``"format": "dataset.v1"``).

First line: header JSON (format tag, config hash, world summary). Every
following line is one self-contained frame/camera record. Floats serialize
through Python's shortest round-trip repr, so write -> read -> write is
byte-identical. Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..handmodel.camera import Camera
from ..training.features import Observation
from ..training.losses import TrainingSample, mode_annotation_index

DATASET_FORMAT = "dataset.v1"

JOINT2D_SENTINEL = -1.0  # stored in place of invisible keypoint pixels

__all__ = ["DataError", "DATASET_FORMAT", "JOINT2D_SENTINEL", "FrameRecord",
           "write_dataset", "read_dataset", "to_training_samples"]


class DataError(Exception):
    """Malformed or inconsistent dataset file."""


@dataclass
class FrameRecord:
    """One (frame, camera) sample: observation, ground truth, annotation set."""

    frame_id: str
    cam_id: str
    split: str  # train | test | mixed
    camera: Camera
    joints2d: np.ndarray  # (n_kp, 2) pixels; sentinel where invisible
    visibility: np.ndarray  # (n_kp,) bool
    joints3d: np.ndarray  # (n_kp, 3) camera frame, mm
    psi_gt: np.ndarray  # (pose_dim,)
    annotations: np.ndarray  # (M, pose_dim)
    occluders_world: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    ann_seed: int = 0
    ann_exhausted: bool = False

    def occluders_cam(self) -> np.ndarray:
        """Scene occluder spheres transformed into this record's camera frame."""
        if len(self.occluders_world) == 0:
            return np.zeros((0, 4))
        centers = self.camera.world_to_cam(self.occluders_world[:, :3])
        return np.concatenate([centers, self.occluders_world[:, 3:4]], axis=1)

    def to_json_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "cam_id": self.cam_id,
            "split": self.split,
            "camera": self.camera.to_dict(),
            "joints2d": np.asarray(self.joints2d, dtype=np.float64).tolist(),
            "visibility": [int(v) for v in np.asarray(self.visibility, dtype=bool)],
            "joints3d": np.asarray(self.joints3d, dtype=np.float64).tolist(),
            "psi_gt": np.asarray(self.psi_gt, dtype=np.float64).tolist(),
            "annotations": np.asarray(self.annotations, dtype=np.float64).tolist(),
            "occluders_world": np.asarray(self.occluders_world, dtype=np.float64).tolist(),
            "ann_seed": self.ann_seed,
            "ann_exhausted": self.ann_exhausted,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FrameRecord":
        try:
            return cls(
                frame_id=d["frame_id"],
                cam_id=d["cam_id"],
                split=d["split"],
                camera=Camera.from_dict(d["camera"]),
                joints2d=np.array(d["joints2d"], dtype=np.float64),
                visibility=np.array(d["visibility"], dtype=bool),
                joints3d=np.array(d["joints3d"], dtype=np.float64),
                psi_gt=np.array(d["psi_gt"], dtype=np.float64),
                annotations=np.array(d["annotations"], dtype=np.float64),
                occluders_world=np.array(d.get("occluders_world", []),
                                         dtype=np.float64).reshape(-1, 4),
                ann_seed=int(d.get("ann_seed", 0)),
                ann_exhausted=bool(d.get("ann_exhausted", False)),
            )
        except (KeyError, ValueError, TypeError) as err:
            raise DataError(f"malformed dataset record: {err}") from err


def write_dataset(path, header: dict, records: list[FrameRecord]) -> None:
    header = {"format": DATASET_FORMAT, **header}
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines.extend(
        json.dumps(r.to_json_dict(), sort_keys=True, separators=(",", ":")) for r in records
    )
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_dataset(path) -> tuple[dict, list[FrameRecord]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines:
        raise DataError(f"empty dataset file: {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise DataError(f"{path}:1: invalid header JSON: {err}") from err
    if header.get("format") != DATASET_FORMAT:
        raise DataError(f"{path}: unsupported dataset format {header.get('format')!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(FrameRecord.from_json_dict(json.loads(line)))
        except json.JSONDecodeError as err:
            raise DataError(f"{path}:{lineno}: invalid record JSON: {err}") from err
    return header, records


def to_training_samples(records: list[FrameRecord], seed: int,
                        split: str | None = "train") -> list[TrainingSample]:
    """Training samples for the requested split (None = all records).

    The designated mode annotation is a seeded hash of the frame identifier,
    so it is stable across epochs and runs for a fixed dataset + seed.
    """
    samples = []
    for rec in records:
        if split is not None and rec.split != split:
            continue
        n_ann = len(rec.annotations)
        mode_idx = mode_annotation_index(f"{rec.frame_id}/{rec.cam_id}", seed, n_ann) \
            if n_ann else None
        samples.append(TrainingSample(
            frame_id=f"{rec.frame_id}/{rec.cam_id}",
            observation=Observation(rec.joints2d, rec.visibility, cam_id=rec.cam_id),
            camera=rec.camera,
            joints3d=rec.joints3d,
            annotations=rec.annotations,
            mode_index=mode_idx,
        ))
    return samples
