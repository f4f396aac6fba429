import numpy as np
import pytest

from chargepred.encoders import (
    ConvDefEncoder,
    DefinitionCache,
    SelfAttentionPool,
    encode_all_definitions,
    encode_definition,
    encode_definitions,
    encode_fact,
    pad_ids,
)
from chargepred.errors import ConfigError, ContractError, EmptyInputError
from chargepred.layers import GruCell
from chargepred.numeric import Tensor, backward, no_grad, tsum
from chargepred.numeric.gradcheck import check_gradients

D_IN, D_H = 5, 4


def parts(seed=0):
    rng = np.random.default_rng(seed)
    gru = GruCell.create(D_IN, D_H, rng, "gru")
    gru.bx.data = rng.uniform(-0.5, 0.5, gru.bx.shape)
    pool = SelfAttentionPool.create(D_H, 3, rng)
    conv = ConvDefEncoder.create(D_IN, D_H, rng)
    conv.b.data = rng.uniform(-0.5, 0.5, conv.b.shape)
    return rng, gru, pool, conv


def test_single_step_fact():
    rng, gru, pool, _ = parts()
    enc = encode_fact(Tensor(rng.normal(size=(1, 1, D_IN))), np.ones((1, 1)), gru, pool)
    assert enc.alpha.data.tolist() == [[1.0]]
    np.testing.assert_array_equal(enc.Fc.data[0], enc.H.data[0, 0])


def test_zero_gru_gives_zero_states():
    rng, gru, pool, _ = parts()
    for t in gru.named_tensors().values():
        t.data = np.zeros_like(t.data)
    enc = encode_fact(Tensor(rng.normal(size=(2, 6, D_IN))), np.ones((2, 6)), gru, pool)
    np.testing.assert_array_equal(enc.H.data, 0.0)
    np.testing.assert_array_equal(enc.Fc.data, 0.0)


def test_identical_tokens_uniform_attention_over_real_positions():
    # no recurrence and a closed update gate make every state tanh(x Wc + b)
    rng, gru, pool, _ = parts()
    gru.wh.data = np.zeros_like(gru.wh.data)
    gru.wx.data[:, D_H:2 * D_H] = 0.0
    gru.bx.data[D_H:2 * D_H] = -1e3
    x = np.tile(rng.normal(size=D_IN), (1, 7, 1))
    mask = np.array([[1, 1, 1, 1, 1, 0, 0]], dtype=bool)
    alpha = encode_fact(Tensor(x), mask, gru, pool).alpha.data[0]
    np.testing.assert_allclose(alpha[:5], 0.2, atol=1e-15)
    assert alpha[5] == 0.0 and alpha[6] == 0.0


def test_fact_attention_properties():
    rng, gru, pool, _ = parts(1)
    mask = np.array([[1] * 8, [1] * 3 + [0] * 5, [1] + [0] * 7], dtype=bool)
    enc = encode_fact(Tensor(rng.normal(size=(3, 8, D_IN))), mask, gru, pool)
    a = enc.alpha.data
    assert np.all(a >= 0) and np.all(a[~mask] == 0.0)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)
    for b in range(3):
        H = enc.H.data[b][mask[b]]
        assert np.all(enc.Fc.data[b] >= H.min(axis=0) - 1e-12)
        assert np.all(enc.Fc.data[b] <= H.max(axis=0) + 1e-12)


def test_fact_prefix_causality():
    rng, gru, pool, _ = parts(2)
    x = rng.normal(size=(1, 9, D_IN))
    full = encode_fact(Tensor(x), np.ones((1, 9)), gru, pool).H.data
    pre = encode_fact(Tensor(x[:, :4]), np.ones((1, 4)), gru, pool).H.data
    np.testing.assert_array_equal(full[:, :4], pre)


def test_fact_empty():
    _, gru, pool, _ = parts()
    with pytest.raises(EmptyInputError):
        encode_fact(Tensor(np.zeros((1, 0, D_IN))), np.ones((1, 0)), gru, pool)
    with pytest.raises(EmptyInputError):
        encode_fact(Tensor(np.zeros((1, 3, D_IN))), np.zeros((1, 3)), gru, pool)


def test_zero_conv_gives_zero_encoding():
    rng, _, _, conv = parts()
    conv.w.data[:] = 0.0
    conv.b.data[:] = 0.0
    E, L = encode_definition(Tensor(rng.normal(size=(4, D_IN))), conv)
    np.testing.assert_array_equal(E.data, 0.0)
    np.testing.assert_array_equal(L.data, 0.0)


def test_single_token_definition_sees_padding():
    rng, _, _, conv = parts()
    x = rng.normal(size=(1, D_IN))
    E, _ = encode_definition(Tensor(x), conv)
    assert E.shape == (1, D_H)
    window = np.concatenate([np.zeros(D_IN), x[0], np.zeros(D_IN)])
    np.testing.assert_allclose(E.data[0], np.tanh(window @ conv.w.data + conv.b.data), atol=1e-15)


def test_definition_sum_pooling_oracle():
    rng, _, _, conv = parts(3)
    x = rng.normal(size=(4, D_IN))
    E, L = encode_definition(Tensor(x), conv)
    manual = np.zeros(D_H)
    for j in range(4):
        manual = manual + E.data[j]
    np.testing.assert_allclose(L.data, manual, atol=1e-15)
    np.testing.assert_allclose(L.data, E.data[rng.permutation(4)].sum(axis=0), atol=1e-14)


def test_padded_definitions_match_unpadded():
    rng, _, _, conv = parts(4)
    a, b = rng.normal(size=(2, D_IN)), rng.normal(size=(5, D_IN))
    x = np.zeros((2, 5, D_IN))
    x[0, :2], x[1] = a, b
    mask = np.array([[1, 1, 0, 0, 0], [1] * 5], dtype=bool)
    enc = encode_definitions(Tensor(x), mask, conv)
    Ea, La = encode_definition(Tensor(a), conv)
    np.testing.assert_allclose(enc.E.data[0, :2], Ea.data, atol=1e-15)
    np.testing.assert_array_equal(enc.E.data[0, 2:], 0.0)
    np.testing.assert_allclose(enc.L.data[0], La.data, atol=1e-14)
    np.testing.assert_array_equal(enc.rows(0), enc.E.data[0, :2])


def test_all_definitions_shape_equivariance_and_duplicates():
    rng, _, _, conv = parts(5)
    table = Tensor(rng.normal(size=(12, D_IN)))
    defs = [(2, 3, 4), (5, 6), (2, 3, 4)]
    L = encode_all_definitions(defs, table, conv).L.data
    assert L.shape == (3, D_H)
    np.testing.assert_array_equal(L[0], L[2])
    perm = [1, 2, 0]
    Lp = encode_all_definitions([defs[i] for i in perm], table, conv).L.data
    np.testing.assert_allclose(Lp, L[perm], atol=1e-15)


def test_definition_cache_reuses_until_version_changes():
    rng, _, _, conv = parts()
    table = Tensor(rng.normal(size=(8, D_IN)))
    cache = DefinitionCache()
    first = encode_all_definitions([(2, 3)], table, conv, cache, version=0)
    assert encode_all_definitions([(2, 3)], table, conv, cache, version=0) is first
    encode_all_definitions([(2, 3)], table, conv, cache, version=1)
    with no_grad():
        encode_all_definitions([(2, 3)], table, conv, cache, version=1)
    assert cache.misses == 3


def test_empty_definition_rejected():
    _, _, _, conv = parts()
    with pytest.raises(EmptyInputError):
        encode_definitions(Tensor(np.zeros((0, 2, D_IN))), np.zeros((0, 2)), conv)
    with pytest.raises(ContractError):
        encode_definition(Tensor(np.zeros(D_IN)), conv)


def test_even_window_rejected():
    with pytest.raises(ConfigError):
        ConvDefEncoder.create(3, 3, np.random.default_rng(0), window=4)


def test_pad_ids():
    ids, mask = pad_ids([(3, 4), (5,), (6, 7, 8)])
    assert ids.tolist() == [[3, 4, 0], [5, 0, 0], [6, 7, 8]]
    assert mask.sum() == 6


def test_encoder_gradients():
    rng, gru, pool, conv = parts(6)
    x = Tensor(rng.normal(size=(2, 5, D_IN)), requires_grad=True)
    mask = np.array([[1] * 5, [1, 1, 1, 0, 0]], dtype=bool)
    dx = Tensor(rng.normal(size=(2, 4, D_IN)), requires_grad=True)
    dmask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool)
    w1, w2 = Tensor(rng.normal(size=D_H)), Tensor(rng.normal(size=D_H))

    def loss():
        enc = encode_fact(x, mask, gru, pool)
        d = encode_definitions(dx, dmask, conv)
        return tsum(enc.Fc * w1) + tsum(d.L * w2) + tsum(d.E * d.E)

    params = {"x": x, "dx": dx, **gru.named_tensors("gru."), **pool.named_tensors("pool."),
              **conv.named_tensors("conv.")}
    errors = check_gradients(loss, params)
    assert max(errors.values()) < 1e-4, errors
