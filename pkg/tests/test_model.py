import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chargepred.data import FactExample
from chargepred.errors import ConfigError, ContractError, DivergenceError, FormatError
from chargepred.model import (
    ABLATIONS,
    ModelConfig,
    ModelParams,
    forward,
    infer,
    load_params,
    loss,
    predict,
    save_params,
    train,
)
from chargepred.numeric import Tensor
from conftest import micro_instance


# -------------------------------------------------------------------- loss

def test_positive_only_loss_perfect_confidence_is_zero():
    assert loss(Tensor([[1.0, 0.3, 1.0]]), [[1, 0, 1]], "paper").item() == pytest.approx(0.0, abs=1e-11)


def test_positive_only_loss_half_probability():
    assert loss(Tensor([[0.5, 0.9]]), [[1, 0]], "paper").item() == pytest.approx(math.log(2), abs=1e-15)


def test_bce_loss_half_probabilities():
    assert loss(Tensor([[0.5, 0.5]]), [[1, 0]], "bce").item() == pytest.approx(2 * math.log(2), abs=1e-15)


def test_loss_sums_over_batch():
    o = Tensor([[0.5, 0.5], [0.5, 0.5]])
    assert loss(o, [[1, 0], [0, 1]]).item() == pytest.approx(4 * math.log(2), abs=1e-14)


def test_loss_rejects_empty_labels_and_unknown_variant():
    with pytest.raises(ContractError):
        loss(Tensor([[0.5, 0.5]]), [[0, 0]])
    with pytest.raises(ConfigError):
        loss(Tensor([[0.5, 0.5]]), [[1, 0]], "hinge")


def test_loss_clamps_extremes():
    assert math.isfinite(loss(Tensor([[0.0, 1.0]]), [[1, 0]]).item())


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(1e-6, 1 - 1e-6)), st.data())
def test_bce_never_below_positive_only_loss(o, data):
    y = data.draw(arrays(np.int64, (3, 4), elements=st.integers(0, 1)))
    y[:, 0] |= (y.sum(axis=1) == 0)
    assert loss(Tensor(o), y, "bce").item() >= loss(Tensor(o), y, "paper").item()


# ----------------------------------------------------------------- predict

def test_predict_examples():
    assert predict([0.9, 0.1]).tolist() == [1, 0]
    assert predict([0.2, 0.3]).tolist() == [0, 1]
    assert predict([0.5, 0.5]).tolist() == [1, 1]
    assert predict([0.3, 0.3, 0.1]).tolist() == [1, 0, 0]


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (5, 6), elements=st.floats(0, 1)), st.floats(0.01, 0.99))
def test_predict_never_empty(o, th):
    assert np.all(predict(o, th).sum(axis=1) >= 1)


# ----------------------------------------------------------------- forward

def test_all_components_disabled():
    with pytest.raises(ConfigError):
        ModelConfig(use_fc=False, use_fs=False, use_fw=False).validate()


def test_unknown_ablation():
    with pytest.raises(ConfigError):
        ModelConfig().with_ablation("no_everything")


def test_ablation_flags():
    assert ModelConfig().with_ablation("no_fs_fw").n_parts == 1
    cfg = ModelConfig().with_ablation("no_fs_gi")
    assert (cfg.use_fs, cfg.use_gi, cfg.use_fw) == (False, False, True)


def test_fact_only_is_plain_gru_attention_classifier():
    config, params, examples, defs = micro_instance(0)
    config = config.with_ablation("no_fs_fw")
    params = ModelParams.create(config)
    tr = forward(examples, defs, params, config)
    assert tr.Fs is None and tr.Fw is None and tr.memory is None and tr.defs is None
    F = np.tanh(tr.Fc.data @ params.fc_final.w.data.T + params.fc_final.b.data)
    o = 1 / (1 + np.exp(-(F @ params.classifier.w.data.T + params.classifier.b.data)))
    np.testing.assert_allclose(tr.o.data, o, atol=1e-15)


def test_no_fw_drops_fw_from_concat():
    config, _, examples, defs = micro_instance(1)
    full = ModelParams.create(config)
    cfg = config.with_ablation("no_fw")
    part = ModelParams.create(cfg)
    assert full.fc_final.w.shape == (config.d_h, 3 * config.d_h)
    assert part.fc_final.w.shape == (config.d_h, 2 * config.d_h)
    tr = forward(examples, defs, part, cfg)
    assert tr.Fw is None and tr.Fs is not None and tr.F.shape == (len(examples), config.d_h)


def test_zero_classifier_weights():
    config, params, examples, defs = micro_instance(2)
    params.classifier.w.data[:] = 0.0
    o = forward(examples, defs, params, config).o.data
    np.testing.assert_array_equal(o, np.tile(o[0], (len(examples), 1)))
    np.testing.assert_allclose(o[0], 1 / (1 + np.exp(-params.classifier.b.data)), rtol=0, atol=1e-15)


def test_uniform_charge_weights_ignore_episodic_attention():
    config, params, examples, defs = micro_instance(3)
    config = config.with_ablation("no_fs_gi")
    params = ModelParams.create(config)
    o1 = forward(examples, defs, params, config).o.data
    params.episodic.w1.data = np.random.default_rng(0).normal(size=params.episodic.w1.shape)
    o2 = forward(examples, defs, params, config).o.data
    np.testing.assert_array_equal(o1, o2)
    tr = forward(examples, defs, params, config)
    assert tr.memory is None


def test_outputs_are_probabilities():
    config, params, examples, defs = micro_instance(4)
    o = forward(examples, defs, params, config).o.data
    assert np.all((o > 0) & (o < 1))


def test_batch_independent_of_neighbours():
    config, params, examples, defs = micro_instance(5)
    joint = forward(examples, defs, params, config).o.data
    for b, ex in enumerate(examples):
        np.testing.assert_allclose(forward([ex], defs, params, config).o.data[0], joint[b], atol=1e-14)


def test_wrong_number_of_definitions():
    config, params, examples, defs = micro_instance(6)
    with pytest.raises(ContractError):
        forward(examples, defs[:-1], params, config)


# ------------------------------------------------------------------- train

def test_memorizes_two_examples():
    exs = [FactExample((2, 3, 4), (1, 0)), FactExample((5, 6), (0, 1))]
    defs = [(2, 7), (5, 8)]
    cfg = ModelConfig(n_classes=2, vocab_size=10, epochs=200, batch_size=2, lr_halve_every=0, seed=1)
    hist = train(exs, defs, cfg).history
    assert hist[-1]["loss"] < 0.01


def test_training_is_deterministic():
    config, _, examples, defs = micro_instance(7, n_examples=6)
    config = replace(config, epochs=3, batch_size=2)
    a, b = train(examples, defs, config), train(examples, defs, config)
    assert a.history == b.history
    for (n, x), (_, y) in zip(a.params.named_tensors().items(), b.params.named_tensors().items()):
        assert x.data.tobytes() == y.data.tobytes(), n


def test_padding_row_stays_zero():
    config, _, examples, defs = micro_instance(8, n_examples=4)
    result = train(examples, defs, replace(config, epochs=2))
    np.testing.assert_array_equal(result.params.embedding.data[0], 0.0)


def test_divergence_is_reported():
    config, _, examples, defs = micro_instance(9)
    table = np.full((config.vocab_size, config.d_emb), np.nan)
    with pytest.raises(DivergenceError):
        train(examples, defs, replace(config, epochs=1), embeddings=table)


def test_empty_training_set():
    config, _, _, defs = micro_instance(0)
    with pytest.raises(ContractError):
        train([], defs, config)


# ------------------------------------------------------------- checkpoints

def test_save_load_round_trip(tmp_path):
    config, params, examples, defs = micro_instance(10)
    path = tmp_path / "m.ckpt"
    save_params(path, params, config, {"note": "x"})
    loaded, cfg2, extra = load_params(path)
    assert cfg2 == config and extra == {"note": "x"}
    for (n, a), (_, b) in zip(params.named_tensors().items(), loaded.named_tensors().items()):
        assert a.data.tobytes() == b.data.tobytes(), n
    o1 = forward(examples, defs, params, config).o.data
    o2 = forward(examples, defs, loaded, cfg2).o.data
    assert o1.tobytes() == o2.tobytes()


def test_load_with_wrong_class_count(tmp_path):
    config, params, _, _ = micro_instance(11)
    save_params(tmp_path / "m.ckpt", params, config)
    with pytest.raises(FormatError):
        load_params(tmp_path / "m.ckpt", replace(config, n_classes=4))


def test_corrupted_header(tmp_path):
    config, params, _, _ = micro_instance(12)
    path = tmp_path / "m.ckpt"
    save_params(path, params, config)
    raw = bytearray(path.read_bytes())
    raw[30:40] = b"#" * 10
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_params(path)
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(FormatError):
        load_params(path)


def test_infer_matches_forward():
    config, params, examples, defs = micro_instance(13, n_examples=5)
    probs = infer(examples, defs, params, replace(config, batch_size=2))
    np.testing.assert_allclose(probs, forward(examples, defs, params, config).o.data, atol=1e-14)


def test_every_ablation_runs():
    config, _, examples, defs = micro_instance(14)
    for name in ABLATIONS:
        cfg = config.with_ablation(name)
        o = forward(examples, defs, ModelParams.create(cfg), cfg).o
        assert o.shape == (len(examples), config.n_classes)
