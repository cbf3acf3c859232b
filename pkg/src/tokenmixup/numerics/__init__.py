"""Minimal float32 tensor engine: define-by-run autodiff, SGD and checkpoints."""
from . import ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ops import (
    concat,
    cross_entropy,
    gather_tokens,
    gelu,
    layer_norm,
    matmul,
    softmax_rows,
    take,
    where,
)
from .optim import SGD, sgd_step
from .tensor import (
    ConstantTape,
    Graph,
    Tensor,
    backward,
    constant_tape,
    default_dtype,
    grad,
    no_grad,
    precision,
    stop_gradient,
)

__all__ = [
    "CheckpointError", "ConstantTape", "Graph", "SGD", "Tensor", "backward", "concat",
    "constant_tape", "cross_entropy", "default_dtype", "gather_tokens", "gelu", "grad",
    "layer_norm", "load_checkpoint", "matmul", "no_grad", "ops", "precision",
    "save_checkpoint", "sgd_step", "softmax_rows", "stop_gradient", "take", "where",
]
