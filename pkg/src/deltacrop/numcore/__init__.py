"""Minimal numpy-backed tensors with reverse-mode differentiation."""

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .ops import (
    concat,
    conv2d,
    exp,
    linear,
    log,
    log_softmax,
    masked_softmax,
    matmul,
    mean,
    relu,
    reshape,
    softmax,
    sqrt,
    stack,
    std,
    transpose,
)
from .tensor import Tensor, as_tensor, grad_enabled, no_grad

__all__ = [
    "GradCheckReport",
    "Tensor",
    "as_tensor",
    "backward",
    "concat",
    "conv2d",
    "exp",
    "grad_check",
    "grad_enabled",
    "linear",
    "log",
    "log_softmax",
    "masked_softmax",
    "matmul",
    "mean",
    "no_grad",
    "ops",
    "relu",
    "reshape",
    "softmax",
    "sqrt",
    "stack",
    "std",
    "transpose",
]


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tracked leaf reachable from ``loss``."""
    loss.backward()
