"""Sentence- and word-level interaction between a fact and the charge definitions.

Sentence level: an episodic memory, seeded with the fact vector, repeatedly
scores every definition summary against the fact and the memory, then
replaces the memory by the attention-weighted sum of summaries.  The fact,
the last memory and the one before it feed a dense layer (``Fs``).

Word level: every fact hidden state attends over the token encodings of each
definition by inner product; the per-definition results are mixed with the
final charge attention, run through a separate GRU, and the last state is
combined with the fact vector (``Fw``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoders import DefinitionEncoding
from .errors import ConfigError, ContractError, DimensionError, EmptyInputError
from .layers import GruCell, Linear, Module, fc, init_matrix
from .numeric import Tensor, concat, matmul, mul, softmax, tabs, tanh, tsum


@dataclass
class EpisodicAttention(Module):
    w1: Tensor  # (d_a', 4h)
    w2: Tensor  # (1, d_a')
    iterations: int = 3

    @classmethod
    def create(cls, d_h: int, d_att: int, rng: np.random.Generator, iterations: int = 3,
               name: str = "episodic") -> "EpisodicAttention":
        if iterations < 1:
            raise ConfigError("episodic attention needs at least one iteration")
        return cls(init_matrix(rng, (d_att, 4 * d_h), 4 * d_h, f"{name}.w1"),
                   init_matrix(rng, (1, d_att), d_att, f"{name}.w2"), iterations)

    def features(self, Fc: Tensor, memory: Tensor, L: Tensor) -> Tensor:
        """``[L*Fc; L*m; |L-Fc|; |L-m|]`` for every (example, charge): (B, C, 4h)."""
        B, h = Fc.shape
        C = L.shape[0]
        Lb = L.reshape(1, C, h)
        f = Fc.reshape(B, 1, h)
        m = memory.reshape(B, 1, h)
        return concat([mul(Lb, f), mul(Lb, m), tabs(Lb - f), tabs(Lb - m)], axis=-1)

    def scores(self, Fc: Tensor, memory: Tensor, L: Tensor) -> Tensor:
        z = self.features(Fc, memory, L)
        a = matmul(tanh(matmul(z, self.w1.T)), self.w2.T)
        return a.reshape(a.shape[:2])


@dataclass
class MemoryTrace:
    memories: list[Tensor] = field(default_factory=list)    # m_0 .. m_T, each (B, h)
    attentions: list[Tensor] = field(default_factory=list)  # g(1) .. g(T), each (B, C)

    @property
    def final_attention(self) -> Tensor:
        return self.attentions[-1]


def identify_charges(Fc: Tensor, L: Tensor, attention: EpisodicAttention,
                     iterations: int | None = None) -> MemoryTrace:
    """Iterate charge attention and memory updates starting from ``m_0 = Fc``.

    Step ``t`` scores each charge against ``m_t``, normalises over charges to
    ``g(t+1)`` and sets ``m_{t+1} = g(t+1) @ L``.
    """
    T = attention.iterations if iterations is None else iterations
    if T < 1:
        raise ConfigError("iterations must be >= 1")
    if L.ndim != 2 or L.shape[0] < 1:
        raise EmptyInputError("need at least one charge summary")
    if Fc.ndim != 2 or Fc.shape[1] != L.shape[1]:
        raise ContractError(f"fact width {Fc.shape[-1]} does not match definition width {L.shape[-1]}")
    if attention.w1.shape[1] != 4 * Fc.shape[1]:
        raise DimensionError("episodic attention weights do not match hidden size")
    trace = MemoryTrace(memories=[Fc])
    memory = Fc
    for _ in range(T):
        g = softmax(attention.scores(Fc, memory, L), axis=-1)
        memory = matmul(g, L)
        trace.attentions.append(g)
        trace.memories.append(memory)
    return trace


def charge_related_representation(Fc: Tensor, trace: MemoryTrace, layer: Linear) -> Tensor:
    """``Fs = fc([Fc; m_T; m_{T-1}])``; with one iteration ``m_{T-1}`` is ``Fc``."""
    return fc([Fc, trace.memories[-1], trace.memories[-2]], layer)


@dataclass
class WordAlignment:
    beta: Tensor      # (B, C, m, n); zero at padded definition positions
    per_charge: Tensor  # (B, C, m, d_e): h_k^{l_i}
    projected: Tensor   # (B, m, d_e): h_k^L
    charges: np.ndarray  # indices of the charges that were aligned


def align_words(H: Tensor, defs: DefinitionEncoding, g: Tensor, top_k: int | None = None) -> WordAlignment:
    """Project each fact state onto the definitions' token encodings.

    Scores are plain inner products; attention runs over the real tokens of
    one definition.  Per-definition projections are mixed with ``g`` (B, C).
    ``top_k`` restricts the mix to the union of each example's ``top_k``
    charges (the dropped weights are not renormalised).
    """
    E = defs.E
    B, m, h = H.shape
    C, n, d_e = E.shape
    if h != d_e:
        raise ContractError(f"fact states (width {h}) and definition tokens (width {d_e}) must match")
    if g.shape != (B, C):
        raise DimensionError(f"charge weights must be ({B}, {C}), got {g.shape}")
    charges = np.arange(C)
    def_mask = defs.mask
    if top_k is not None and top_k < C:
        order = np.argsort(-g.data, axis=1, kind="stable")[:, :top_k]
        charges = np.unique(order)
        E = E[charges]
        g = g[:, charges]
        def_mask = def_mask[charges]
        C = len(charges)
    scores = matmul(H.reshape(B, 1, m, h), E.transpose(0, 2, 1).reshape(1, C, h, n))
    beta = softmax(scores, axis=-1, mask=def_mask[None, :, None, :])
    per_charge = matmul(beta, E.reshape(1, C, n, h))
    projected = tsum(mul(g.reshape(B, C, 1, 1), per_charge), axis=1)
    return WordAlignment(beta, per_charge, projected, charges)


def charge_token_related_representation(projected: Tensor, mask: np.ndarray, Fc: Tensor,
                                        gru: GruCell, layer: Linear) -> tuple[Tensor, Tensor]:
    """Run the aggregator GRU over ``h^L`` and return ``(Fw, last_state)``."""
    if projected.shape[1] == 0:
        raise EmptyInputError("word-level aggregation over an empty sequence")
    states = gru(projected, mask)
    last = states[:, -1, :]
    return fc([Fc, last], layer), last
