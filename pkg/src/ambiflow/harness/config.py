"""Flat key-value configuration: file parsing, overrides, hashing, typed views.

Config files are plain text, one ``key = value`` per line; ``#`` starts a
comment. Values parse as bool/int/float, comma-separated lists thereof, or
stay strings. CLI ``--set key=value`` overrides file values, which override
the built-in defaults. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from ..annotate.plausibility import PlausibilityConfig
from ..flow.blocks import FlowConfig
from ..training.features import FeatureConfig
from ..training.loop import TrainConfig
from ..training.losses import LossWeights

__all__ = ["ConfigError", "DEFAULTS", "parse_value", "load_config_file", "resolve_config",
           "config_hash", "format_config", "flow_config", "feature_config", "train_config",
           "loss_weights", "plausibility_config"]


class ConfigError(ValueError):
    """Malformed config file, unknown key, or unparseable value."""


DEFAULTS: dict = {
    "seed": 0,
    # synthetic world
    "world.frames": 24,
    "world.cameras": 8,
    "world.camera_radius": 650.0,
    "world.camera_focal": 800.0,
    "world.resolution": 448,
    "world.occluders": 3,
    "world.occluder_radius_min": 25.0,
    "world.occluder_radius_max": 45.0,
    "world.occluder_shell_min": 0.25,  # fraction of camera radius
    "world.occluder_shell_max": 0.55,
    "world.pose_scale": 1.0,
    "world.hand_separation_min": 80.0,
    "world.hand_separation_max": 220.0,
    "world.scene_jitter": 40.0,  # mm, random offset of the hand pair from the origin
    "world.test_cameras": 2,
    "world.test_frames_fraction": 0.25,
    "world.prior_components": 20,
    "world.prior_corpus": 1500,
    "world.articulation_factors": 12,
    "world.articulation_noise": 0.03,
    # model / geometry
    "model.reference_focal": 800.0,
    "model.delta_occ": 5.0,
    "model.crop": 224.0,
    "model.s_center": 1.0,
    "model.s_scale": 0.25,
    # flow
    "flow.blocks": 4,
    "flow.hidden": 64,
    "flow.cond_dim": 128,
    "flow.clamp": 8.0,
    # feature extractor
    "feat.hidden": [128, 128],
    # training
    "train.steps": 600,
    "train.batch_size": 4,
    "train.lr": 3e-3,
    "train.lr_decay": "linear",
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.ann_cap": 8,
    "train.checkpoint_every": 200,
    "train.lambda_nll": 1.0,
    "train.lambda_detmag": 1.0,
    "train.lambda_psi": 1.0,
    "train.lambda_j3d": 0.0025,
    "train.lambda_j2d": 0.0025,
    "train.lambda_theta": 0.1,
    # annotation generation
    "annotate.pixel_threshold": 5.0,
    "annotate.pca_quantile": 0.99,
    "annotate.iterations": 10,
    "annotate.population_cap": 100,
    "annotate.proposals_per_seed": 8,
    "annotate.perturb_std_rot": 0.012,
    "annotate.perturb_std_scale": 0.02,
    "annotate.perturb_mag_min": 0.5,
    "annotate.perturb_mag_max": 2.5,
    # evaluation
    "eval.samples": 100,
    "eval.mmd_scales": [10.0, 20.0, 50.0, 100.0, 200.0],
    "eval.ambiguous_std_mm": 3.0,
}


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def load_config_file(path) -> dict:
    cfg: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = parse_value(value)
    return cfg


def _coerce_like(key: str, value, template):
    if isinstance(template, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(template, int) and not isinstance(template, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return int(value)
    if isinstance(template, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(template, list):
        if not isinstance(value, list):
            value = [value]
        return [float(v) if isinstance(v, (int, float)) else v for v in value]
    return value


def resolve_config(file_path=None, overrides: dict | None = None,
                   seed: int | None = None) -> dict:
    """Defaults <- config file <- --set overrides <- --seed, with key validation."""
    cfg = dict(DEFAULTS)
    for source in (load_config_file(file_path) if file_path else {}, overrides or {}):
        for key, value in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce_like(key, value, DEFAULTS[key])
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def format_config(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, list):
            text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()[:16]


# typed views ---------------------------------------------------------------


def flow_config(cfg: dict, dim: int = 218) -> FlowConfig:
    return FlowConfig(dim=dim, cond_dim=cfg["flow.cond_dim"], blocks=cfg["flow.blocks"],
                      hidden=cfg["flow.hidden"], clamp=cfg["flow.clamp"])


def feature_config(cfg: dict, n_keypoints: int = 42) -> FeatureConfig:
    hidden = cfg["feat.hidden"]
    hidden = tuple(int(h) for h in (hidden if isinstance(hidden, list) else [hidden]))
    return FeatureConfig(n_keypoints=n_keypoints, hidden=hidden, out_dim=cfg["flow.cond_dim"])


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        steps=cfg["train.steps"],
        batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"],
        lr_decay=cfg["train.lr_decay"],
        beta1=cfg["train.beta1"],
        beta2=cfg["train.beta2"],
        eps=cfg["train.eps"],
        ann_cap=cfg["train.ann_cap"],
        checkpoint_every=cfg["train.checkpoint_every"],
        seed=cfg["seed"],
        crop=cfg["model.crop"],
        reference_focal=cfg["model.reference_focal"],
    )


def loss_weights(cfg: dict) -> LossWeights:
    return LossWeights(
        nll=cfg["train.lambda_nll"],
        detmag=cfg["train.lambda_detmag"],
        psi=cfg["train.lambda_psi"],
        j3d=cfg["train.lambda_j3d"],
        j2d=cfg["train.lambda_j2d"],
        theta=cfg["train.lambda_theta"],
    )


def plausibility_config(cfg: dict) -> PlausibilityConfig:
    return PlausibilityConfig(
        pixel_threshold=cfg["annotate.pixel_threshold"],
        pca_quantile=cfg["annotate.pca_quantile"],
        iterations=cfg["annotate.iterations"],
        population_cap=cfg["annotate.population_cap"],
        proposals_per_seed=cfg["annotate.proposals_per_seed"],
        perturb_std_rot=cfg["annotate.perturb_std_rot"],
        perturb_std_scale=cfg["annotate.perturb_std_scale"],
        perturb_mag_min=cfg["annotate.perturb_mag_min"],
        perturb_mag_max=cfg["annotate.perturb_mag_max"],
        delta_occ=cfg["model.delta_occ"],
        reference_focal=cfg["model.reference_focal"],
    )
