"""Conditional normalizing flow: blocks, model, checkpoints."""

from .blocks import FlowConfig, block_forward, block_inverse, init_block_params, make_permutations
from .checkpoint import CHECKPOINT_FORMAT, load_checkpoint, save_checkpoint
from .model import ConditionedFlow, FlowNumericError

__all__ = [
    "FlowConfig",
    "ConditionedFlow",
    "FlowNumericError",
    "block_forward",
    "block_inverse",
    "init_block_params",
    "make_permutations",
    "CHECKPOINT_FORMAT",
    "save_checkpoint",
    "load_checkpoint",
]
