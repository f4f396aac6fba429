"""Adam optimizer, step-decay learning-rate schedule, global-norm clipping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """Apply one Adam update in place using each parameter's ``.grad``."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
        if p.grad.shape != p.shape:
            raise DimensionError(f"gradient of {name!r} has shape {p.grad.shape}, expected {p.shape}")
        if name in state.m and state.m[name].shape != p.shape:
            raise DimensionError(f"Adam moments of {name!r} do not match parameter shape")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def halving_lr(base_lr: float, epoch: int, every: int = 2, offset: int = 0) -> float:
    """Learning rate for a zero-based ``epoch`` under step halving.

    With ``every=2, offset=0`` epochs 0-1 use ``base_lr``, 2-3 half of it,
    and so on.  ``offset=1`` halves from epoch 1 on (1-2, 3-4, ...).
    ``every=0`` disables decay.
    """
    if every <= 0:
        return base_lr
    return base_lr * 0.5 ** ((epoch + offset) // every)


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Rescale gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values() if p.grad is not None))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return total
