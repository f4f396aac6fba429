"""Tokenization, vocabulary, embeddings and JSON-lines ingestion."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, IngestionError

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

DEFAULT_MAX_FACT_LEN = 500
DEFAULT_MAX_DEF_LEN = 110
DEFAULT_EMB_DIM = 64


def tokenize(text: str) -> list[str]:
    """Split pre-segmented text on whitespace."""
    return text.split()


class Vocabulary:
    """Token/id mapping with PAD fixed at 0 and UNK at 1."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            if tok in self.stoi:
                continue
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def to_list(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self.itos[2:]

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        return cls(tokens)


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 2) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times.

    Ids are assigned by descending frequency, ties broken lexicographically.
    """
    counts: Counter[str] = Counter()
    n_docs = 0
    for doc in corpus:
        counts.update(doc)
        n_docs += 1
    if n_docs == 0:
        raise IngestionError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_count and t not in (PAD_TOKEN, UNK_TOKEN)]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


def build_training_vocab(fact_docs: Iterable[Sequence[str]], definition_docs: Iterable[Sequence[str]],
                         min_count: int = 2) -> Vocabulary:
    """Frequency-pruned vocabulary that still keeps every definition token.

    Definition words typically occur once per statute; pruning them would
    blank out the text the interaction layers attend over.
    """
    definition_docs = list(definition_docs)
    vocab = build_vocab(list(fact_docs) + definition_docs, min_count)
    extra = sorted({t for doc in definition_docs for t in doc if t not in vocab})
    return Vocabulary(vocab.to_list() + extra)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_embeddings(vocab: Vocabulary, dim: int = DEFAULT_EMB_DIM,
                      rng: np.random.Generator | None = None) -> EmbeddingTable:
    rng = rng if rng is not None else np.random.default_rng(0)
    matrix = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    matrix[PAD] = 0.0
    return EmbeddingTable(matrix)


def read_embedding_file(path: str | Path) -> dict[str, np.ndarray]:
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise FormatError(f"{path}:{lineno}: embedding row has no values")
            elif len(values) != dim:
                raise FormatError(f"{path}:{lineno}: expected {dim} values, found {len(values)}")
            try:
                vectors[word] = np.array([float(v) for v in values])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric embedding value") from None
    if dim is None:
        raise FormatError(f"{path}: no embedding rows")
    return vectors


def load_embeddings(path: str | Path, vocab: Vocabulary,
                    rng: np.random.Generator | None = None) -> EmbeddingTable:
    """Table whose rows come from ``path`` where available.

    Words missing from the file get uniform(-0.1, 0.1) rows drawn from
    ``rng``; the PAD row is zero.
    """
    vectors = read_embedding_file(path)
    dim = len(next(iter(vectors.values())))
    table = random_embeddings(vocab, dim, rng)
    for i, tok in enumerate(vocab.itos):
        if i != PAD and tok in vectors:
            table.matrix[i] = vectors[tok]
    return table


@dataclass(frozen=True)
class FactExample:
    tokens: tuple[int, ...]
    labels: tuple[int, ...]

    @property
    def label_indices(self) -> list[int]:
        return [i for i, y in enumerate(self.labels) if y]


@dataclass(frozen=True)
class ChargeDefinition:
    charge_id: int
    name: str
    tokens: tuple[int, ...]


def _read_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            rows.append((lineno, obj))
    return rows


def read_fact_records(path: str | Path) -> list[tuple[list[str], list[str]]]:
    """Raw ``(tokens, accusations)`` pairs from a JSON-lines file with ``fact`` and ``meta.accusation`` fields."""
    records = []
    for lineno, obj in _read_jsonl(path):
        fact = obj.get("fact")
        meta = obj.get("meta")
        accusations = meta.get("accusation") if isinstance(meta, dict) else None
        if not isinstance(fact, str) or not isinstance(accusations, list):
            raise FormatError(f"{path}:{lineno}: needs string 'fact' and list 'meta.accusation'")
        if not all(isinstance(a, str) for a in accusations):
            raise FormatError(f"{path}:{lineno}: accusations must be strings")
        records.append((tokenize(fact), accusations))
    return records


def read_definition_records(path: str | Path) -> list[tuple[str, list[str]]]:
    records = []
    seen = set()
    for lineno, obj in _read_jsonl(path):
        name, definition = obj.get("name"), obj.get("definition")
        if not isinstance(name, str) or not isinstance(definition, str):
            raise FormatError(f"{path}:{lineno}: needs string 'name' and 'definition'")
        if name in seen:
            raise FormatError(f"{path}:{lineno}: duplicate charge name {name!r}")
        tokens = tokenize(definition)
        if not tokens:
            raise FormatError(f"{path}:{lineno}: empty definition for {name!r}")
        seen.add(name)
        records.append((name, tokens))
    if not records:
        raise FormatError(f"{path}: no charge definitions")
    return records


def load_charge_definitions(path: str | Path, vocab: Vocabulary,
                            max_def_len: int = DEFAULT_MAX_DEF_LEN
                            ) -> tuple[list[ChargeDefinition], dict[str, int]]:
    """Definitions with ids in file order, plus the name -> id label map."""
    defs = [
        ChargeDefinition(i, name, tuple(vocab.encode(tokens[:max_def_len])))
        for i, (name, tokens) in enumerate(read_definition_records(path))
    ]
    return defs, {d.name: d.charge_id for d in defs}


def make_example(tokens: Sequence[str], accusations: Sequence[str], vocab: Vocabulary,
                 label_map: dict[str, int], max_fact_len: int = DEFAULT_MAX_FACT_LEN
                 ) -> tuple[FactExample | None, list[str]]:
    """Build one example; returns ``(None, unknown)`` if nothing usable is left."""
    labels = [0] * len(label_map)
    unknown = []
    for name in accusations:
        if name in label_map:
            labels[label_map[name]] = 1
        else:
            unknown.append(name)
    ids = vocab.encode(tokens[:max_fact_len])
    if not ids or not any(labels):
        return None, unknown
    return FactExample(tuple(ids), tuple(labels)), unknown


def load_dataset(path: str | Path, vocab: Vocabulary, label_map: dict[str, int],
                 max_fact_len: int = DEFAULT_MAX_FACT_LEN) -> list[FactExample]:
    """Examples in file order; records without a known label or tokens are skipped."""
    examples = []
    skipped = 0
    unknown: Counter[str] = Counter()
    for tokens, accusations in read_fact_records(path):
        ex, bad = make_example(tokens, accusations, vocab, label_map, max_fact_len)
        unknown.update(bad)
        if ex is None:
            skipped += 1
        else:
            examples.append(ex)
    if unknown:
        log.warning("%s: ignored %d unknown charge label(s): %s", path, sum(unknown.values()),
                    ", ".join(sorted(unknown)))
    if skipped:
        log.warning("%s: skipped %d record(s) with no known label or empty fact", path, skipped)
    return examples


def label_support(examples: Iterable[FactExample], n_classes: int) -> np.ndarray:
    support = np.zeros(n_classes, dtype=np.int64)
    for ex in examples:
        support += np.asarray(ex.labels, dtype=np.int64)
    return support


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
