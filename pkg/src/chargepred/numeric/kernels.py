"""Backend selection for the GRU sequence kernels.

The compiled extension is used when importable; setting
``CHARGEPRED_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

import numpy as np

from . import _gru_py
from .tensor import Tensor, custom
from ..errors import DimensionError, EmptyInputError

try:
    if os.environ.get("CHARGEPRED_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _gru_ext
except ImportError:
    _gru_ext = None

BACKENDS = {"python": _gru_py}
if _gru_ext is not None:
    BACKENDS["cython"] = _gru_ext

BACKEND = "cython" if _gru_ext is not None else "python"


def set_backend(name: str) -> None:
    """Select the default backend for subsequent ``gru_sequence`` calls."""
    global BACKEND
    get_backend(name)
    BACKEND = name


def get_backend(name: str | None = None):
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"GRU backend {name!r} not available; have {sorted(BACKENDS)}") from None


def gru_sequence(xw: Tensor, wh: Tensor, mask: np.ndarray, backend: str | None = None) -> Tensor:
    """Differentiable GRU over a batch of projected inputs.

    ``xw``: (B, m, 3h) projected inputs including biases; ``wh``: (h, 3h);
    ``mask``: (B, m) with 1 at real tokens.  Returns H of shape (B, m, h).
    """
    impl = get_backend(backend)
    if xw.ndim != 3 or xw.shape[2] % 3:
        raise DimensionError(f"gru_sequence: projected input must be (B, m, 3h), got {xw.shape}")
    h = xw.shape[2] // 3
    if wh.shape != (h, 3 * h):
        raise DimensionError(f"gru_sequence: recurrent weight must be ({h}, {3 * h}), got {wh.shape}")
    if xw.shape[1] == 0:
        raise EmptyInputError("gru_sequence over an empty sequence")
    mask = np.ascontiguousarray(mask, dtype=np.float64)
    if mask.shape != xw.shape[:2]:
        raise DimensionError(f"gru_sequence: mask shape {mask.shape} != {xw.shape[:2]}")
    x = np.ascontiguousarray(xw.data)
    w = np.ascontiguousarray(wh.data)
    H, cache = impl.gru_forward(x, w, mask)

    def back(g):
        dxw, dwh = impl.gru_backward(np.ascontiguousarray(g), H, cache, w, mask)
        return dxw, dwh

    return custom(H, (xw, wh), back)
