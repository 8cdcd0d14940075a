"""Tensor, autodiff, layer primitives and Adam -- the numeric substrate."""

from .gradcheck import grad_check
from .optim import AdamConfig, ParamStore, adam_step, truncated_normal
from .tensor import (
    Tensor,
    add,
    as_tensor,
    bce_with_logits,
    concat,
    conv2d,
    cross_entropy,
    default_dtype,
    dense,
    dropout,
    instance_norm,
    l1_loss,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    sigmoid_np,
    spatial_soft_argmax,
    sub,
    transpose_conv2d,
    use_dtype,
)

__all__ = [
    "AdamConfig",
    "ParamStore",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "bce_with_logits",
    "concat",
    "conv2d",
    "cross_entropy",
    "default_dtype",
    "dense",
    "dropout",
    "grad_check",
    "instance_norm",
    "l1_loss",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "set_default_dtype",
    "sigmoid",
    "sigmoid_np",
    "spatial_soft_argmax",
    "sub",
    "transpose_conv2d",
    "truncated_normal",
    "use_dtype",
]
