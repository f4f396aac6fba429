"""Tensors, reverse-mode autodiff, GRU kernels and Adam."""
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    custom,
    elementwise,
    embedding,
    exp,
    getitem,
    log,
    is_grad_enabled,
    matmul,
    mul,
    neg,
    no_grad,
    reshape,
    set_debug,
    sigmoid,
    softmax,
    stack,
    sub,
    tabs,
    tanh,
    transpose,
    tsum,
)
from .kernels import BACKENDS, get_backend, gru_sequence, set_backend
from .optim import AdamState, adam_step, clip_grad_norm, halving_lr

__all__ = [
    "AdamState", "BACKENDS", "Tape", "Tensor", "adam_step", "add", "as_tensor",
    "backward", "clip", "clip_grad_norm", "concat", "custom", "elementwise", "embedding",
    "exp", "getitem", "get_backend", "gru_sequence", "is_grad_enabled", "halving_lr", "log", "matmul", "mul", "neg", "no_grad", "reshape",
    "set_debug", "set_backend", "sigmoid", "softmax", "stack", "sub", "tabs", "tanh", "transpose", "tsum",
]
