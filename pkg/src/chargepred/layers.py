"""Parameterised building blocks shared by the encoders and interaction layers."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import DimensionError
from .numeric import Tensor, concat, gru_sequence, matmul, tanh


def init_matrix(rng: np.random.Generator, shape: tuple[int, int], fan_in: int, name: str) -> Tensor:
    k = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-k, k, size=shape), requires_grad=True, name=name)


def init_bias(n: int, name: str) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True, name=name)


class Module:
    """Dataclass mixin exposing its Tensor fields by name."""

    def named_tensors(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Tensor):
                out[prefix + f.name] = value
        return out


@dataclass
class Linear(Module):
    """``tanh(x @ w.T + b)`` when ``activation`` is set, else affine."""

    w: Tensor  # (out, in)
    b: Tensor
    activation: bool = True

    @classmethod
    def create(cls, d_in: int, d_out: int, rng: np.random.Generator, name: str,
               activation: bool = True) -> "Linear":
        return cls(init_matrix(rng, (d_out, d_in), d_in, f"{name}.w"), init_bias(d_out, f"{name}.b"),
                   activation)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.w.shape[1]:
            raise DimensionError(f"linear layer expects width {self.w.shape[1]}, got {x.shape[-1]}")
        y = matmul(x, self.w.T) + self.b
        return tanh(y) if self.activation else y


def fc(parts: list[Tensor], layer: Linear) -> Tensor:
    """Fully connected layer over the concatenation of ``parts``."""
    return layer(concat(parts, axis=-1))


@dataclass
class GruCell(Module):
    """GRU weights; see ``numeric._gru_py`` for the gate equations."""

    wx: Tensor  # (d_in, 3h)
    bx: Tensor  # (3h,)
    wh: Tensor  # (h, 3h)

    @classmethod
    def create(cls, d_in: int, d_h: int, rng: np.random.Generator, name: str) -> "GruCell":
        return cls(
            init_matrix(rng, (d_in, 3 * d_h), d_in, f"{name}.wx"),
            init_bias(3 * d_h, f"{name}.bx"),
            init_matrix(rng, (d_h, 3 * d_h), d_h, f"{name}.wh"),
        )

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        """Hidden states (B, m, h) from a zero initial state.

        Padded steps carry the previous state forward.
        """
        if x.shape[-1] != self.wx.shape[0]:
            raise DimensionError(f"GRU expects input width {self.wx.shape[0]}, got {x.shape[-1]}")
        return gru_sequence(matmul(x, self.wx) + self.bx, self.wh, mask)
