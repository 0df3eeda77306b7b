"""Minibatch training loop: Adam on the weighted loss, deterministic given a seed."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import diffcore as dc
from ..diffcore import Adam, Tensor
from ..flow.checkpoint import load_checkpoint, save_checkpoint
from ..flow.model import ConditionedFlow, FlowConfig
from ..handmodel.skeleton import ModelAssets
from .features import FeatureConfig, init_feature_params
from .losses import LossWeights, TrainingSample, total_loss_graph
from .norm import PoseNorm

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainResult", "train", "build_model", "checkpoint_meta",
           "ModelBundle", "load_model"]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 600
    batch_size: int = 4
    lr: float = 1e-3
    lr_decay: str = "linear"  # "linear" to zero over the run, or "none"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ann_cap: int = 8
    checkpoint_every: int = 200
    seed: int = 0
    crop: float = 224.0
    reference_focal: float = 800.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "steps", "batch_size", "lr", "lr_decay", "beta1", "beta2", "eps", "ann_cap",
            "checkpoint_every", "seed", "crop", "reference_focal")}

    def lr_at(self, step: int) -> float:
        if self.lr_decay == "linear":
            return self.lr * (1.0 - (step - 1) / max(self.steps, 1))
        return self.lr


@dataclass
class TrainResult:
    flow: ConditionedFlow
    feat_params: dict[str, Tensor]
    feat_cfg: FeatureConfig
    norm: PoseNorm
    history: list[dict] = field(default_factory=list)
    diverged: bool = False
    steps_done: int = 0


def build_model(flow_cfg: FlowConfig, feat_cfg: FeatureConfig, seed: int
                ) -> tuple[ConditionedFlow, dict[str, Tensor]]:
    """Flow (identity-initialized) and feature network, seeded deterministically."""
    init_ss = np.random.SeedSequence([seed, 0x1A17])
    flow_seed, feat_seed = init_ss.spawn(2)
    flow = ConditionedFlow.create(flow_cfg, seed=flow_seed)
    feat_params = init_feature_params(feat_cfg, np.random.default_rng(feat_seed))
    return flow, feat_params


def checkpoint_meta(flow: ConditionedFlow, feat_cfg: FeatureConfig, norm: PoseNorm,
                    weights: LossWeights, cfg: TrainConfig, config_hash: str = "",
                    extra: dict | None = None) -> dict:
    meta = {
        "flow": flow.config.to_dict(),
        "perms": [p.tolist() for p in flow.perms],
        "features": feat_cfg.to_dict(),
        "norm": norm.to_dict(),
        "weights": weights.to_dict(),
        "train": cfg.to_dict(),
        "config_hash": config_hash,
    }
    if extra:
        meta.update(extra)
    return meta


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: t.data.copy() for k, t in params.items()}


def _restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]) -> None:
    for k, t in params.items():
        t.data[...] = snap[k]


def train(samples: list[TrainingSample], assets: ModelAssets, norm: PoseNorm,
          flow_cfg: FlowConfig, feat_cfg: FeatureConfig, weights: LossWeights,
          cfg: TrainConfig, checkpoint_path: str | Path | None = None,
          config_hash: str = "") -> TrainResult:
    """Train flow + feature extractor on the sample list.

    Deterministic for a fixed (samples, configs, seed). On divergence the last
    good snapshot is restored and training stops early with ``diverged=True``.
    """
    if not samples:
        raise ValueError("train: dataset must be non-empty")
    flow, feat_params = build_model(flow_cfg, feat_cfg, cfg.seed)
    all_params: dict[str, Tensor] = {**flow.params, **feat_params}
    opt = Adam(all_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)

    step_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x57E9]))
    result = TrainResult(flow=flow, feat_params=feat_params, feat_cfg=feat_cfg, norm=norm)
    last_good = _snapshot(all_params)

    term_keys = ("nll", "detmag", "psi", "j3d", "j2d", "theta", "total")
    for step in range(1, cfg.steps + 1):
        idx = step_rng.choice(len(samples), size=min(cfg.batch_size, len(samples)),
                              replace=False)
        grad_acc: dict[Tensor, np.ndarray] = {}
        term_acc = {k: [] for k in term_keys}
        bad = False
        for i in idx:
            try:
                loss, grads, terms = _sample_loss(samples[i], weights, flow, feat_params,
                                                  feat_cfg, assets, norm, step_rng, cfg)
            except dc.NumericError as err:
                log.error("numeric failure at step %d: %s", step, err)
                bad = True
                break
            if not np.isfinite(loss):
                bad = True
                break
            for t, g in grads.items():
                acc = grad_acc.get(t)
                grad_acc[t] = g if acc is None else acc + g
            for k in term_keys:
                term_acc[k].append(terms[k])
        if bad:
            log.error("non-finite loss at step %d; restoring last good checkpoint", step)
            _restore(all_params, last_good)
            result.diverged = True
            break
        scale = 1.0 / len(idx)
        opt.lr = cfg.lr_at(step)
        opt.step({t: g * scale for t, g in grad_acc.items()})

        row = {"step": step}
        for k in term_keys:
            vals = [x for x in term_acc[k] if np.isfinite(x)]
            row[k] = float(np.mean(vals)) if vals else float("nan")
        result.history.append(row)
        result.steps_done = step

        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            last_good = _snapshot(all_params)

    if checkpoint_path is not None:
        meta = checkpoint_meta(flow, feat_cfg, norm, weights, cfg, config_hash,
                               extra={"steps_done": result.steps_done,
                                      "diverged": result.diverged})
        save_checkpoint(checkpoint_path, all_params, meta)
    return result


def _sample_loss(sample, weights, flow, feat_params, feat_cfg, assets, norm, rng, cfg):
    loss, terms = total_loss_graph(sample, weights, flow, feat_params, feat_cfg, assets,
                                   norm, rng, ann_cap=cfg.ann_cap, crop=cfg.crop,
                                   reference_focal=cfg.reference_focal)
    grads = dc.backward(loss)
    return loss.item(), grads, terms


@dataclass
class ModelBundle:
    """A trained (or freshly initialized) model as loaded from a checkpoint."""

    flow: ConditionedFlow
    feat_params: dict[str, Tensor]
    feat_cfg: FeatureConfig
    norm: PoseNorm
    meta: dict

    @property
    def crop(self) -> float:
        return float(self.meta["train"]["crop"])

    @property
    def reference_focal(self) -> float:
        return float(self.meta["train"]["reference_focal"])


def load_model(path: str | Path) -> ModelBundle:
    params, meta = load_checkpoint(path)
    flow_cfg = FlowConfig.from_dict(meta["flow"])
    perms = [np.asarray(p, dtype=np.int64) for p in meta["perms"]]
    flow_params = {k: v for k, v in params.items() if k.startswith("blocks.")}
    feat_params = {k: v for k, v in params.items() if k.startswith("feat.")}
    return ModelBundle(
        flow=ConditionedFlow(flow_cfg, flow_params, perms),
        feat_params=feat_params,
        feat_cfg=FeatureConfig.from_dict(meta["features"]),
        norm=PoseNorm.from_dict(meta["norm"]),
        meta=meta,
    )
