"""Fact description encoder (GRU + attention pooling) and definition encoder (CNN + sum)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, EmptyInputError
from .layers import GruCell, Module, init_bias, init_matrix
from .numeric import Tensor, concat, embedding, is_grad_enabled, matmul, mul, softmax, tanh, tsum


@dataclass
class SelfAttentionPool(Module):
    w1: Tensor  # (d_a, d_h)
    w2: Tensor  # (1, d_a)

    @classmethod
    def create(cls, d_h: int, d_a: int, rng: np.random.Generator, name: str = "attn"):
        return cls(init_matrix(rng, (d_a, d_h), d_h, f"{name}.w1"),
                   init_matrix(rng, (1, d_a), d_a, f"{name}.w2"))

    def scores(self, H: Tensor) -> Tensor:
        """One logit per time step: ``w2 tanh(w1 h_i)``."""
        a = matmul(tanh(matmul(H, self.w1.T)), self.w2.T)
        return a.reshape(a.shape[:-1])


@dataclass
class ConvDefEncoder(Module):
    """Same-padded 1-D convolution with tanh; kernel rows are ordered by window offset."""

    w: Tensor  # (s * d_in, d_e)
    b: Tensor  # (d_e,)
    window: int = 3

    @classmethod
    def create(cls, d_in: int, d_e: int, rng: np.random.Generator, window: int = 3,
               name: str = "conv"):
        if window < 1 or window % 2 == 0:
            raise ConfigError(f"convolution window must be odd and positive, got {window}")
        return cls(init_matrix(rng, (window * d_in, d_e), window * d_in, f"{name}.w"),
                   init_bias(d_e, f"{name}.b"), window)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        """E of shape (N, n, d_e); rows at padded positions are zero."""
        N, n, d = x.shape
        if self.w.shape[0] != self.window * d:
            raise DimensionError(f"conv kernel expects input width {self.w.shape[0] // self.window}, got {d}")
        half = (self.window - 1) // 2
        zeros = Tensor(np.zeros((N, half, d)))
        padded = concat([zeros, x, zeros], axis=1) if half else x
        windows = concat([padded[:, o:o + n, :] for o in range(self.window)], axis=-1)
        E = tanh(matmul(windows, self.w) + self.b)
        return mul(E, np.asarray(mask, dtype=np.float64)[..., None])


@dataclass
class FactEncoding:
    H: Tensor      # (B, m, h)
    alpha: Tensor  # (B, m)
    Fc: Tensor     # (B, h)


@dataclass
class DefinitionEncoding:
    E: Tensor            # (C, n, d_e)
    L: Tensor            # (C, d_e)
    mask: np.ndarray     # (C, n) bool

    def rows(self, i: int) -> np.ndarray:
        """Unpadded E rows of definition ``i``."""
        return self.E.data[i][self.mask[i]]


def encode_fact(x: Tensor, mask: np.ndarray, gru: GruCell, pool: SelfAttentionPool) -> FactEncoding:
    """GRU states, attention weights over real tokens, and their weighted sum."""
    mask = np.asarray(mask, dtype=bool)
    if x.shape[1] == 0 or not mask.any(axis=1).all():
        raise EmptyInputError("fact encoder needs at least one token per example")
    H = gru(x, mask)
    alpha = softmax(pool.scores(H), axis=-1, mask=mask)
    B, m = alpha.shape
    Fc = matmul(alpha.reshape(B, 1, m), H)
    return FactEncoding(H, alpha, Fc.reshape(B, H.shape[2]))


def encode_definitions(x: Tensor, mask: np.ndarray, conv: ConvDefEncoder) -> DefinitionEncoding:
    """Encode a padded stack of definitions and sum-pool each over its real tokens."""
    mask = np.asarray(mask, dtype=bool)
    if x.shape[0] == 0:
        raise EmptyInputError("no charge definitions to encode")
    if x.shape[1] == 0 or not mask.any(axis=1).all():
        raise EmptyInputError("every charge definition needs at least one token")
    E = conv(x, mask)
    return DefinitionEncoding(E, tsum(E, axis=1), mask)


def encode_definition(x: Tensor, conv: ConvDefEncoder) -> tuple[Tensor, Tensor]:
    """Single unpadded definition ``(n, d)`` -> ``(E (n, d_e), L (d_e,))``."""
    if x.ndim != 2:
        raise ContractError(f"expected an (n, d) embedded definition, got {x.shape}")
    n, d = x.shape
    enc = encode_definitions(x.reshape(1, n, d), np.ones((1, n), dtype=bool), conv)
    d_e = enc.E.shape[2]
    return enc.E.reshape(n, d_e), enc.L.reshape(d_e)


class DefinitionCache:
    """Reuses definition encodings until the parameters change.

    Callers bump ``version`` (e.g. after each optimizer step); a stale or
    differently-recorded (grad vs no-grad) entry is recomputed.
    """

    def __init__(self):
        self._key = None
        self._value: DefinitionEncoding | None = None
        self.misses = 0

    def get(self, key, compute) -> DefinitionEncoding:
        key = (key, is_grad_enabled())
        if self._value is None or key != self._key:
            self._value = compute()
            self._key = key
            self.misses += 1
        return self._value

    def clear(self) -> None:
        self._key, self._value = None, None


def encode_all_definitions(def_tokens: Sequence[Sequence[int]], table: Tensor, conv: ConvDefEncoder,
                           cache: DefinitionCache | None = None, version=None) -> DefinitionEncoding:
    """Embed, pad and encode every charge definition (rows follow input order)."""
    def compute():
        ids, mask = pad_ids(def_tokens)
        return encode_definitions(embedding(table, ids), mask, conv)

    if cache is None:
        return compute()
    return cache.get(version, compute)


def pad_ids(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences with 0; returns ``(ids, mask)``."""
    if not seqs:
        raise EmptyInputError("nothing to pad")
    n = max(len(s) for s in seqs)
    ids = np.zeros((len(seqs), n), dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    mask = np.zeros_like(ids, dtype=bool)
    for i, s in enumerate(seqs):
        mask[i, : len(s)] = True
    return ids, mask
