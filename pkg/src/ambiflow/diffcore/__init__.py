"""Minimal reverse-mode autodiff engine: tensors, tape, backward, Adam."""

from .optim import Adam, AdamState, adam_init, adam_step
from .tensor import (
    ContractError,
    DiffcoreError,
    DomainError,
    NumericError,
    Tensor,
    add,
    apply,
    as_tensor,
    backward,
    clip,
    concat,
    div,
    exp,
    gather,
    log,
    matmul,
    mean_,
    mul,
    no_grad,
    relu,
    reshape,
    slice_,
    sqrt,
    square,
    stop_gradient,
    sub,
    sum_,
    sumsq,
    tanh,
    tile_rows,
    topo_order,
)

__all__ = [
    "Tensor",
    "DiffcoreError",
    "ContractError",
    "DomainError",
    "NumericError",
    "no_grad",
    "as_tensor",
    "apply",
    "backward",
    "topo_order",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "exp",
    "log",
    "tanh",
    "relu",
    "sum_",
    "mean_",
    "concat",
    "slice_",
    "reshape",
    "gather",
    "stop_gradient",
    "square",
    "sqrt",
    "sumsq",
    "clip",
    "tile_rows",
    "Adam",
    "AdamState",
    "adam_init",
    "adam_step",
]
