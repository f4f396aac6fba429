import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from chargepred.data import FactExample  # noqa: E402
from chargepred.model import ModelConfig, ModelParams  # noqa: E402

MICRO = dict(n_classes=3, vocab_size=20, d_emb=8, d_h=8, iterations=3, max_fact_len=10, max_def_len=6)


def micro_instance(seed: int, n_examples: int = 3, **overrides):
    """Random micro problem: config, params, examples and definitions."""
    config = ModelConfig(**{**MICRO, "seed": seed, **overrides}).validate()
    rng = np.random.default_rng([seed, 99])
    params = ModelParams.create(config)
    # perturb biases so no parameter sits at an untypical exact zero
    for name, t in params.named_tensors().items():
        if name.endswith(".b") or name.endswith(".bx"):
            t.data = rng.uniform(-0.3, 0.3, size=t.shape)
    defs = [tuple(rng.integers(2, config.vocab_size, size=rng.integers(1, 7)).tolist())
            for _ in range(config.n_classes)]
    examples = []
    for _ in range(n_examples):
        toks = tuple(rng.integers(1, config.vocab_size, size=rng.integers(1, 11)).tolist())
        labels = np.zeros(config.n_classes, dtype=int)
        labels[rng.choice(config.n_classes, size=rng.integers(1, 3), replace=False)] = 1
        examples.append(FactExample(toks, tuple(labels.tolist())))
    return config, params, examples, defs


@pytest.fixture
def micro():
    return micro_instance(0)
