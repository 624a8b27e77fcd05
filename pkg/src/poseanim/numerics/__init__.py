"""Deterministic float64 tensor engine with reverse-mode differentiation."""

from .conv import conv2d, conv3d
from .gradcheck import finite_diff_check, relative_error
from .module import Linear, Module
from .ops import (
    add,
    attention,
    attention_weights,
    broadcast_to,
    concat,
    concat_channels,
    gelu,
    getitem,
    index_select,
    layer_norm,
    linear,
    mean,
    mean_pool,
    mul,
    nearest_upsample,
    reshape,
    sub,
    sum,
    transpose,
)
from .optim import AdamState, adamw_step
from .rng import Rng
from .tensor import Tensor, as_tensor, is_grad_enabled, make_op, no_grad

__all__ = [
    "AdamState", "Linear", "Module", "Rng", "Tensor", "add", "adamw_step", "as_tensor", "attention",
    "attention_weights", "broadcast_to", "concat", "concat_channels", "conv2d", "conv3d",
    "finite_diff_check", "gelu", "getitem", "index_select", "is_grad_enabled", "layer_norm", "linear",
    "make_op", "mean", "mean_pool", "mul", "nearest_upsample", "no_grad", "relative_error", "reshape",
    "sub", "sum", "transpose",
]
