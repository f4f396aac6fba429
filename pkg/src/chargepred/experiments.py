"""Glue for running train/evaluate cycles on corpora held in memory."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data import (
    ChargeDefinition,
    FactExample,
    Vocabulary,
    build_training_vocab,
    label_support,
    make_example,
    load_embeddings,
    random_embeddings,
    read_definition_records,
    read_fact_records,
    tokenize,
)
from .errors import FormatError, IngestionError
from .metrics import MetricsReport, count_all, finalize, intra_class_variance, macro_f1_over
from .model import ModelConfig, ModelParams, TrainResult, infer, load_params, predict, save_params, train
from .synthetic import SyntheticCorpus


@dataclass
class PreparedCorpus:
    vocab: Vocabulary
    definitions: list[ChargeDefinition]
    train: list[FactExample]
    test: list[FactExample]
    embeddings: np.ndarray | None = None

    @property
    def def_tokens(self) -> list[tuple[int, ...]]:
        return [d.tokens for d in self.definitions]

    @property
    def class_names(self) -> list[str]:
        return [d.name for d in self.definitions]

    @property
    def n_classes(self) -> int:
        return len(self.definitions)

    def train_support(self) -> np.ndarray:
        return label_support(self.train, self.n_classes)


def _prepare(train_pairs, test_pairs, def_pairs, min_count, max_fact_len, max_def_len) -> PreparedCorpus:
    vocab = build_training_vocab([t for t, _ in train_pairs], [t for _, t in def_pairs], min_count)
    definitions = [ChargeDefinition(i, name, tuple(vocab.encode(toks[:max_def_len])))
                   for i, (name, toks) in enumerate(def_pairs)]
    label_map = {d.name: d.charge_id for d in definitions}

    def examples(pairs):
        out = []
        for toks, acc in pairs:
            ex, _ = make_example(toks, acc, vocab, label_map, max_fact_len)
            if ex is not None:
                out.append(ex)
        return out

    return PreparedCorpus(vocab, definitions, examples(train_pairs), examples(test_pairs))


def prepare_records(train_records, test_records, definition_records, min_count: int = 1,
                    max_fact_len: int = 500, max_def_len: int = 110) -> PreparedCorpus:
    """Vocabulary over training facts and definitions, then id-mapped examples.

    Records use the on-disk JSON-lines layout.
    """
    pairs = lambda rows: [(tokenize(r["fact"]), r["meta"]["accusation"]) for r in rows]  # noqa: E731
    defs = [(d["name"], tokenize(d["definition"])) for d in definition_records]
    return _prepare(pairs(train_records), pairs(test_records), defs, min_count, max_fact_len, max_def_len)


def prepare_files(train_path, defs_path, test_path=None, min_count: int = 2, max_fact_len: int = 500,
                  max_def_len: int = 110, embeddings_path=None, seed: int = 0) -> PreparedCorpus:
    """Like :func:`prepare_records` but reading the JSON-lines files."""
    train_pairs = read_fact_records(train_path)
    if not train_pairs:
        raise IngestionError(f"{train_path}: no training records")
    test_pairs = read_fact_records(test_path) if test_path is not None else []
    corpus = _prepare(train_pairs, test_pairs, read_definition_records(defs_path), min_count,
                      max_fact_len, max_def_len)
    if not corpus.train:
        raise IngestionError(f"{train_path}: no record carries a known charge")
    if embeddings_path is not None:
        corpus.embeddings = load_embeddings(embeddings_path, corpus.vocab,
                                            np.random.default_rng([seed, 11])).matrix
    return corpus


def prepare_synthetic(corpus: SyntheticCorpus, emb_dim: int | None = None, min_count: int = 1) -> PreparedCorpus:
    """Prepare a synthetic corpus; ``emb_dim`` adds its synonym-aware embeddings."""
    prepared = prepare_records(corpus.train, corpus.test, corpus.definitions, min_count)
    if emb_dim is not None:
        vectors = corpus.embeddings(emb_dim)
        table = random_embeddings(prepared.vocab, emb_dim, np.random.default_rng([corpus.seed, 11])).matrix
        for i, tok in enumerate(prepared.vocab.itos):
            if i > 0 and tok in vectors:
                table[i] = vectors[tok]
        prepared.embeddings = table
    return prepared


def configure(base: ModelConfig, corpus: PreparedCorpus, **overrides) -> ModelConfig:
    return replace(base, n_classes=corpus.n_classes, vocab_size=len(corpus.vocab), **overrides).validate()


def fit(corpus: PreparedCorpus, config: ModelConfig) -> TrainResult:
    return train(corpus.train, corpus.def_tokens, config, embeddings=corpus.embeddings)


def evaluate(examples: Sequence[FactExample], corpus: PreparedCorpus, params: ModelParams,
             config: ModelConfig) -> MetricsReport:
    probs = infer(examples, corpus.def_tokens, params, config)
    gold = np.array([ex.labels for ex in examples], dtype=np.int64)
    return finalize(count_all(predict(probs, config.threshold), gold), class_names=corpus.class_names)


def representations(examples: Sequence[FactExample], corpus: PreparedCorpus, params: ModelParams,
                    config: ModelConfig) -> dict[str, np.ndarray]:
    """Fc, the Fc/Fs concatenation (when Fs exists) and F for every example."""
    def keep(trace):
        out = {"Fc": trace.Fc.data, "F": trace.F.data}
        if trace.Fs is not None:
            out["Fc+Fs"] = np.concatenate([trace.Fc.data, trace.Fs.data], axis=1)
        return out

    _, kept = infer(examples, corpus.def_tokens, params, config, keep=keep)
    return {k: np.concatenate([b[k] for b in kept], axis=0) for k in kept[0]}


def variance_by_stage(examples, corpus, params, config, top_k: int = 5) -> dict[str, float]:
    reps = representations(examples, corpus, params, config)
    labels = np.array([ex.labels for ex in examples])
    ordered = {k: reps[k] for k in ("Fc", "Fc+Fs", "F") if k in reps}
    return intra_class_variance(ordered, labels, top_k)


def rare_class_mf1(report: MetricsReport, rare: Sequence[int]) -> float:
    return macro_f1_over(report, rare)


@dataclass
class Bundle:
    """Everything needed to run a trained model on raw text."""

    params: ModelParams
    config: ModelConfig
    vocab: Vocabulary
    definitions: list[ChargeDefinition]
    train_support: list[int]

    @property
    def class_names(self) -> list[str]:
        return [d.name for d in self.definitions]

    @property
    def def_tokens(self) -> list[tuple[int, ...]]:
        return [d.tokens for d in self.definitions]

    def corpus(self, train=(), test=()) -> PreparedCorpus:
        return PreparedCorpus(self.vocab, self.definitions, list(train), list(test))


def save_bundle(path, params: ModelParams, config: ModelConfig, corpus: PreparedCorpus) -> None:
    extra = {
        "vocab": corpus.vocab.to_list(),
        "charges": [{"name": d.name, "tokens": list(d.tokens)} for d in corpus.definitions],
        "train_support": corpus.train_support().tolist(),
    }
    save_params(path, params, config, extra)


def load_bundle(path) -> Bundle:
    params, config, extra = load_params(path)
    try:
        vocab = Vocabulary.from_list(extra["vocab"])
        definitions = [ChargeDefinition(i, c["name"], tuple(c["tokens"])) for i, c in enumerate(extra["charges"])]
        support = list(extra["train_support"])
    except (KeyError, TypeError):
        raise FormatError(f"{path}: checkpoint lacks vocabulary/charge metadata") from None
    if len(definitions) != config.n_classes or len(vocab) != config.vocab_size:
        raise FormatError(f"{path}: metadata does not match the saved config")
    return Bundle(params, config, vocab, definitions, support)
