"""Minimal reverse-mode autodiff engine and the layer set used by the decoders."""

from . import functional
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import (
    DivergenceError,
    batch_norm,
    conv2d,
    dense,
    dropout,
    elu,
    pool_avg,
    softmax,
    softmax_cross_entropy,
)
from .gradcheck import gradient_check
from .layers import (
    ELU,
    AvgPool,
    BatchNorm2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Module,
    Sequential,
)
from .optim import Adam, OptimizerState, adam_step
from .tensor import Tensor, concat, no_grad

__all__ = [
    "Tensor", "no_grad", "concat", "functional",
    "conv2d", "batch_norm", "elu", "pool_avg", "dropout", "dense", "softmax",
    "softmax_cross_entropy", "DivergenceError",
    "Module", "Conv2d", "BatchNorm2d", "ELU", "AvgPool", "Dropout", "Dense", "Flatten", "Sequential",
    "Adam", "OptimizerState", "adam_step", "gradient_check",
    "save_checkpoint", "load_checkpoint",
]
