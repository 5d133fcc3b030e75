"""Minimal reverse-mode automatic differentiation over float64 numpy arrays."""

from . import ops
from .checkpoint import FORMAT_TAG, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check, numeric_grad, relative_error
from .ops import (
    add,
    concat,
    custom,
    dropout,
    embedding_lookup,
    exp,
    layer_norm,
    log,
    log_softmax,
    masked_fill,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    softmax,
    softplus,
    sub,
    transpose,
)
from .ops import slice as slice_
from .ops import sum as sum_
from .optim import AdamState, adam_step, clip_grad_norm, global_grad_norm, zero_grad
from .tensor import Tape, Tensor, as_tensor, backward, check_finite, config, current_tape, no_grad, set_check_finite

__all__ = [
    "AdamState", "FORMAT_TAG", "GradCheckReport", "Tape", "Tensor", "adam_step", "add", "as_tensor",
    "backward", "check_finite", "clip_grad_norm", "concat", "config", "current_tape", "custom", "dropout",
    "embedding_lookup", "exp", "global_grad_norm", "grad_check", "layer_norm", "load_checkpoint", "log",
    "log_softmax", "masked_fill", "matmul", "mean", "mul", "no_grad", "numeric_grad", "ops",
    "relative_error", "relu", "reshape", "save_checkpoint", "set_check_finite", "slice_", "softmax",
    "softplus", "sub", "sum_", "transpose", "zero_grad",
]
