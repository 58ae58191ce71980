"""Dense-tensor numeric core: autodiff, optimizer, schedule, checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .optim import OptimizerState, adabelief_step, cosine_lr
from .tensor import (
    GraphError,
    MaskError,
    NumericError,
    Tensor,
    add,
    backward,
    concat,
    einsum,
    exp,
    index,
    instance_norm,
    linear,
    log,
    masked_log_softmax,
    masked_softmax,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    square,
    sub,
    sum_,
    take_along_axis,
    tanh,
    transpose,
)

__all__ = [
    "adabelief_step",
    "add",
    "backward",
    "CheckpointError",
    "concat",
    "cosine_lr",
    "einsum",
    "exp",
    "GraphError",
    "index",
    "instance_norm",
    "linear",
    "load_checkpoint",
    "log",
    "masked_log_softmax",
    "masked_softmax",
    "MaskError",
    "matmul",
    "mean",
    "mul",
    "NumericError",
    "OptimizerState",
    "relu",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "square",
    "sub",
    "sum_",
    "take_along_axis",
    "tanh",
    "Tensor",
    "transpose",
]
