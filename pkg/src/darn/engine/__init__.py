from .tensor import ShapeError, Tensor, as_tensor
from .ops import (
    RunningStats,
    add,
    affine,
    batch_norm,
    clip_min,
    conv2d,
    div,
    flatten,
    getitem,
    log,
    max_pool,
    mean_per_sample,
    mul,
    pad,
    reduce,
    relu,
    reshape,
    sigmoid,
    softplus_shifted,
    square,
    sub,
)
from .gradcheck import GradCheckReport, finite_diff_check

__all__ = [
    "GradCheckReport",
    "RunningStats",
    "ShapeError",
    "Tensor",
    "add",
    "affine",
    "as_tensor",
    "batch_norm",
    "clip_min",
    "conv2d",
    "div",
    "finite_diff_check",
    "flatten",
    "getitem",
    "log",
    "max_pool",
    "mean_per_sample",
    "mul",
    "pad",
    "reduce",
    "relu",
    "reshape",
    "sigmoid",
    "softplus_shifted",
    "square",
    "sub",
]
