from . import checkpoint
from .optim import AdamW, adamw_update, clip_by_global_norm
from .tensor import (
    Tensor,
    add,
    backward,
    concat,
    div,
    exp,
    gelu,
    l2_normalize,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    pow_,
    reset_tape,
    reshape,
    set_strict,
    slice_,
    softmax,
    sqrt,
    strict_mode,
    sub,
    sum_,
    take,
    tape_size,
    tensor,
    transpose,
    zeros,
)

__all__ = [
    "AdamW", "Tensor", "adamw_update", "add", "backward", "checkpoint",
    "clip_by_global_norm", "concat", "div", "exp", "gelu", "l2_normalize",
    "layer_norm", "log", "log_softmax", "matmul", "mean", "mul", "no_grad",
    "pow_", "reset_tape", "reshape", "set_strict", "slice_", "softmax",
    "sqrt", "strict_mode", "sub", "sum_", "take", "tape_size", "tensor",
    "transpose", "zeros",
]
