"""Flow building blocks: actnorm, fixed permutations, conditional affine coupling.

Each block applies actnorm, permutes, transforms the second half of the
permuted vector with shift/log-scale computed from the first half and the
conditioning vector, then undoes the permutation. Un-permuting inside the
block keeps an identity-initialized flow exactly equal to the identity map.

Coupling log-scales are hard-clamped to [-clamp, clamp] so the log-det
cannot blow up when training pressure rewards large determinants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor

__all__ = ["FlowConfig", "init_block_params", "make_permutations", "block_forward", "block_inverse"]


@dataclass(frozen=True)
class FlowConfig:
    dim: int = 218
    cond_dim: int = 128
    blocks: int = 4
    hidden: int = 64
    clamp: float = 8.0

    @property
    def d_pass(self) -> int:
        return self.dim - self.dim // 2

    @property
    def d_trans(self) -> int:
        return self.dim // 2

    def to_dict(self) -> dict:
        return {"dim": self.dim, "cond_dim": self.cond_dim, "blocks": self.blocks,
                "hidden": self.hidden, "clamp": self.clamp}

    @classmethod
    def from_dict(cls, d: dict) -> "FlowConfig":
        return cls(dim=int(d["dim"]), cond_dim=int(d["cond_dim"]), blocks=int(d["blocks"]),
                   hidden=int(d["hidden"]), clamp=float(d["clamp"]))


def make_permutations(cfg: FlowConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Fixed per-block permutations; odd blocks swap the halves of the previous
    block's permutation so every dimension is transformed in half the blocks."""
    perms = []
    for k in range(cfg.blocks):
        if k % 2 == 0:
            perms.append(rng.permutation(cfg.dim))
        else:
            prev = perms[-1]
            perms.append(np.concatenate([prev[cfg.d_pass:], prev[:cfg.d_pass]]))
    return perms


def init_block_params(cfg: FlowConfig, k: int, rng: np.random.Generator) -> dict[str, Tensor]:
    """Identity-initialized coupling block: zero final layer, unit actnorm."""
    n_in = cfg.d_pass + cfg.cond_dim
    n_out = 2 * cfg.d_trans

    def dense(shape, scale):
        return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)

    p = {
        f"blocks.{k}.actnorm.log_scale": Tensor(np.zeros(cfg.dim), requires_grad=True),
        f"blocks.{k}.actnorm.bias": Tensor(np.zeros(cfg.dim), requires_grad=True),
        f"blocks.{k}.net.W0": dense((n_in, cfg.hidden), np.sqrt(1.0 / n_in)),
        f"blocks.{k}.net.b0": Tensor(np.zeros(cfg.hidden), requires_grad=True),
        f"blocks.{k}.net.W1": dense((cfg.hidden, cfg.hidden), np.sqrt(1.0 / cfg.hidden)),
        f"blocks.{k}.net.b1": Tensor(np.zeros(cfg.hidden), requires_grad=True),
        f"blocks.{k}.net.W2": Tensor(np.zeros((cfg.hidden, n_out)), requires_grad=True),
        f"blocks.{k}.net.b2": Tensor(np.zeros(n_out), requires_grad=True),
    }
    return p


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    y = dc.matmul(x, w)
    if y.ndim == 1:
        return y + b
    ones = Tensor(np.ones(y.shape[:-1] + (1,)))
    return y + dc.matmul(ones, dc.reshape(b, (1, b.shape[0])))


def _tile_like(v: Tensor, x: Tensor) -> Tensor:
    """Expand conditioning (F,) to x's batch shape (..., F)."""
    if v.ndim == x.ndim:
        return v
    return dc.tile_rows(v, x.shape[:-1])


def _conditioner(x_pass: Tensor, v: Tensor, params: dict[str, Tensor], k: int,
                 cfg: FlowConfig) -> tuple[Tensor, Tensor]:
    """Shift and clamped log-scale for the transformed half."""
    h = dc.concat([x_pass, _tile_like(v, x_pass)], axis=-1)
    h = dc.tanh(_affine(h, params[f"blocks.{k}.net.W0"], params[f"blocks.{k}.net.b0"]))
    h = dc.tanh(_affine(h, params[f"blocks.{k}.net.W1"], params[f"blocks.{k}.net.b1"]))
    out = _affine(h, params[f"blocks.{k}.net.W2"], params[f"blocks.{k}.net.b2"])
    shift = out[..., : cfg.d_trans]
    log_scale = dc.clip(out[..., cfg.d_trans :], -cfg.clamp, cfg.clamp)
    return shift, log_scale


def block_forward(x: Tensor, v: Tensor, params: dict[str, Tensor], k: int,
                  perm: np.ndarray, cfg: FlowConfig) -> tuple[Tensor, Tensor]:
    """One block of z -> psi; returns (output, log|det|) with log-det per batch row."""
    ls = params[f"blocks.{k}.actnorm.log_scale"]
    y = x * dc.exp(_tile_like(ls, x)) + _tile_like(params[f"blocks.{k}.actnorm.bias"], x)
    logdet = dc.sum_(ls)

    yp = dc.gather(y, perm, axis=y.ndim - 1)
    y_pass = yp[..., : cfg.d_pass]
    y_trans = yp[..., cfg.d_pass :]
    shift, log_scale = _conditioner(y_pass, v, params, k, cfg)
    y_trans = y_trans * dc.exp(log_scale) + shift
    logdet = logdet + dc.sum_(log_scale, axis=-1)

    out = dc.concat([y_pass, y_trans], axis=-1)
    out = dc.gather(out, np.argsort(perm), axis=out.ndim - 1)
    return out, logdet


def block_inverse(y: Tensor, v: Tensor, params: dict[str, Tensor], k: int,
                  perm: np.ndarray, cfg: FlowConfig) -> tuple[Tensor, Tensor]:
    """Exact algebraic inverse of ``block_forward``; log-det is of the inverse map."""
    yp = dc.gather(y, perm, axis=y.ndim - 1)
    y_pass = yp[..., : cfg.d_pass]
    y_trans = yp[..., cfg.d_pass :]
    shift, log_scale = _conditioner(y_pass, v, params, k, cfg)
    y_trans = (y_trans - shift) * dc.exp(-log_scale)
    logdet = -dc.sum_(log_scale, axis=-1)

    out = dc.concat([y_pass, y_trans], axis=-1)
    out = dc.gather(out, np.argsort(perm), axis=out.ndim - 1)

    ls = params[f"blocks.{k}.actnorm.log_scale"]
    out = (out - _tile_like(params[f"blocks.{k}.actnorm.bias"], out)) * dc.exp(-_tile_like(ls, out))
    logdet = logdet - dc.sum_(ls)
    return out, logdet
