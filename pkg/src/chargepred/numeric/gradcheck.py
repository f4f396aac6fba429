"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(loss_fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn().item()
        flat[i] = orig - h
        down = loss_fn().item()
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor).

    ``floor`` keeps entries whose true gradient is ~0 from dividing by
    rounding noise.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
                    h: float = 1e-5, floor: float = 1e-6) -> dict[str, float]:
    """Compare autodiff against finite differences for every parameter.

    Returns the max relative error per parameter name.
    """
    for p in params.values():
        p.grad = None
    backward(loss_fn())
    errors = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        errors[name] = relative_error(analytic, numeric_grad(loss_fn, p, h), floor)
    return errors
