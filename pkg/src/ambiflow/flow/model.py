"""Conditional normalizing flow over flattened pose vectors.

The map f_v transforms a standard-normal base variable z into a pose vector,
conditioned on a feature vector v. Densities follow the change-of-variables
rule, so ``log_prob`` is exact; ``mode`` returns f_v(0) by construction (the
designated single-pose readout; no search for the analytic density mode is
attempted).
"""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .blocks import FlowConfig, block_forward, block_inverse, init_block_params, make_permutations

__all__ = ["ConditionedFlow", "FlowConfig"]

LOG_2PI = float(np.log(2.0 * np.pi))


class FlowNumericError(dc.NumericError):
    """Non-finite intermediate inside a flow block."""

    def __init__(self, block: int, direction: str):
        super().__init__(f"non-finite value in flow block {block} ({direction})")
        self.block = block
        self.direction = direction


class ConditionedFlow:
    """Stack of conditional coupling blocks with a standard-normal base."""

    def __init__(self, config: FlowConfig, params: dict[str, Tensor], perms: list[np.ndarray]):
        self.config = config
        self.params = params
        self.perms = perms

    @classmethod
    def create(cls, config: FlowConfig, seed: int = 0) -> "ConditionedFlow":
        rng = np.random.default_rng(seed)
        perms = make_permutations(config, rng)
        params: dict[str, Tensor] = {}
        for k in range(config.blocks):
            params.update(init_block_params(config, k, rng))
        return cls(config, params, perms)

    def _check(self, t: Tensor, k: int, direction: str) -> None:
        if not np.all(np.isfinite(t.data)):
            raise FlowNumericError(k, direction)

    def forward(self, z, v) -> tuple[Tensor, Tensor]:
        """psi = f_v(z) plus log|det d f_v / d z|; batched over leading dims of z."""
        x = dc.as_tensor(z)
        v = dc.as_tensor(v)
        if x.shape[-1] != self.config.dim:
            raise dc.ContractError(f"flow dim {self.config.dim} != input dim {x.shape[-1]}")
        logdet = None
        for k in range(self.config.blocks):
            try:
                x, ld = block_forward(x, v, self.params, k, self.perms[k], self.config)
            except dc.NumericError as err:
                raise FlowNumericError(k, "forward") from err
            self._check(x, k, "forward")
            logdet = ld if logdet is None else logdet + ld
        return x, logdet

    def inverse(self, psi, v) -> tuple[Tensor, Tensor]:
        """z = f_v^{-1}(psi) plus log|det| of the inverse map (= -forward log-det)."""
        x = dc.as_tensor(psi)
        v = dc.as_tensor(v)
        if x.shape[-1] != self.config.dim:
            raise dc.ContractError(f"flow dim {self.config.dim} != input dim {x.shape[-1]}")
        logdet = None
        for k in reversed(range(self.config.blocks)):
            try:
                x, ld = block_inverse(x, v, self.params, k, self.perms[k], self.config)
            except dc.NumericError as err:
                raise FlowNumericError(k, "inverse") from err
            self._check(x, k, "inverse")
            logdet = ld if logdet is None else logdet + ld
        return x, logdet

    def log_prob(self, psi, v) -> Tensor:
        """Exact log density of psi under the flow, per batch row."""
        z, logdet_inv = self.inverse(psi, v)
        base = dc.sum_(dc.square(z), axis=-1) * (-0.5) - 0.5 * self.config.dim * LOG_2PI
        return base + logdet_inv

    def sample(self, v, n: int, rng: np.random.Generator) -> tuple[Tensor, np.ndarray]:
        """n poses drawn by pushing i.i.d. standard-normal latents through f_v."""
        if n < 1:
            raise dc.ContractError("sample: n must be >= 1")
        z = rng.standard_normal((n, self.config.dim))
        psi, _ = self.forward(z, v)
        return psi, z

    def mode(self, v) -> Tensor:
        """The designated mode sample f_v(0)."""
        psi, _ = self.forward(np.zeros(self.config.dim), v)
        return psi
