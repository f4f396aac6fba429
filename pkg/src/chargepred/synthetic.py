"""Synthetic charge-prediction corpora with a known labelling rule.

Each class owns a definition that contains 2-4 signature terms mixed with
legal filler shared by all classes.  Facts are noise tokens plus surface
forms of the class's terms: usually one of several paraphrases mapped to a
single term, sometimes the formal term itself.  Because every paraphrase
and term belongs to exactly one class, reading them off a fact recovers the
label set exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import tokenize
from .errors import ConfigError


@dataclass
class SyntheticCorpus:
    train: list[dict]
    test: list[dict]
    definitions: list[dict]
    paraphrase_to_term: dict[str, str]
    term_to_class: dict[str, int]
    rare_classes: tuple[int, ...]
    seed: int
    support: dict[str, int] = field(default_factory=dict)

    @property
    def class_names(self) -> list[str]:
        return [d["name"] for d in self.definitions]

    def oracle_labels(self, tokens: Sequence[str]) -> set[int]:
        """Classes whose signature terms are referenced by ``tokens``."""
        found = set()
        for tok in tokens:
            term = self.paraphrase_to_term.get(tok, tok)
            if term in self.term_to_class:
                found.add(self.term_to_class[term])
        return found

    def embeddings(self, dim: int = 64, noise: float = 0.02) -> dict[str, np.ndarray]:
        """Vectors in which each paraphrase sits close to its term.

        Stands in for pre-trained embeddings that already know synonymy.
        """
        rng = np.random.default_rng([self.seed, 7])
        words = sorted({t for r in self.train + self.test for t in tokenize(r["fact"])}
                       | {t for d in self.definitions for t in tokenize(d["definition"])})
        vectors = {w: rng.uniform(-0.1, 0.1, dim) for w in words if w not in self.paraphrase_to_term}
        for para in sorted(self.paraphrase_to_term):
            base = vectors.setdefault(self.paraphrase_to_term[para], rng.uniform(-0.1, 0.1, dim))
            vectors[para] = base + rng.normal(0.0, noise, dim)
        return vectors

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "classes": self.class_names,
            "rare_classes": [self.class_names[i] for i in self.rare_classes],
            "train_support": self.support,
            "n_train": len(self.train),
            "n_test": len(self.test),
        }


def generate_synthetic_corpus(
    C: int,
    n_per_class: int,
    rare_classes: Iterable[int] = (),
    seed: int = 0,
    *,
    rare_count: int = 8,
    n_test_per_class: int = 20,
    paraphrases_per_term: int = 3,
    p_formal: float = 0.2,
    p_multi: float = 0.0,
    fact_len: tuple[int, int] = (12, 24),
    n_noise: int = 60,
    n_filler: int = 20,
) -> SyntheticCorpus:
    """Build a reproducible train/test/definitions triple.

    Classes listed in ``rare_classes`` get ``min(rare_count, n_per_class)``
    training facts (at most 10); every class gets ``n_test_per_class`` test
    facts.  With probability ``p_multi`` a fact also carries the signature of
    a second class and both labels.
    """
    if C < 2:
        raise ConfigError("synthetic corpus needs C >= 2")
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    rare = tuple(sorted(set(int(c) for c in rare_classes)))
    if any(c < 0 or c >= C for c in rare):
        raise ConfigError(f"rare class ids must lie in [0, {C})")
    if not 1 <= rare_count <= 10:
        raise ConfigError("rare_count must lie in [1, 10]")
    lo, hi = fact_len
    if lo < 6 or hi < lo:
        raise ConfigError("fact_len must satisfy 6 <= low <= high")

    rng = np.random.default_rng(seed)
    names = [f"charge{c:02d}" for c in range(C)]
    filler = [f"law{k}" for k in range(n_filler)]
    noise = [f"w{k}" for k in range(n_noise)]

    terms: list[list[str]] = []
    paraphrases: dict[str, list[str]] = {}
    for c in range(C):
        k = int(rng.integers(2, 5))
        cls_terms = [f"term{c}_{j}" for j in range(k)]
        terms.append(cls_terms)
        for t in cls_terms:
            paraphrases[t] = [f"{t}_p{p}" for p in range(paraphrases_per_term)]

    definitions = []
    for c in range(C):
        n_fill = int(rng.integers(5, 9))
        body = list(terms[c]) + [filler[i] for i in rng.choice(n_filler, n_fill, replace=False)]
        order = rng.permutation(len(body))
        definitions.append({"name": names[c], "definition": " ".join(body[i] for i in order)})

    def signal(c: int) -> list[str]:
        chosen = rng.choice(len(terms[c]), int(rng.integers(2, len(terms[c]) + 1)), replace=False)
        out = []
        for j in sorted(chosen):
            term = terms[c][j]
            if rng.random() < p_formal:
                out.append(term)
            else:
                out.append(paraphrases[term][int(rng.integers(paraphrases_per_term))])
        return out

    def fact(c: int) -> dict:
        labels = [c]
        sig = signal(c)
        if p_multi > 0 and rng.random() < p_multi:
            other = int(rng.integers(C - 1))
            other += other >= c
            labels.append(other)
            sig += signal(other)
        length = max(int(rng.integers(lo, hi + 1)), len(sig) + 1)
        tokens = [noise[i] for i in rng.integers(0, n_noise, length - len(sig))]
        for tok in sig:
            tokens.insert(int(rng.integers(0, len(tokens) + 1)), tok)
        return {"fact": " ".join(tokens), "meta": {"accusation": [names[i] for i in sorted(labels)]}}

    train, test = [], []
    support = {}
    for c in range(C):
        n = min(rare_count, n_per_class) if c in rare else n_per_class
        support[names[c]] = n
        train.extend(fact(c) for _ in range(n))
    for c in range(C):
        test.extend(fact(c) for _ in range(n_test_per_class))
    train = [train[i] for i in rng.permutation(len(train))]

    return SyntheticCorpus(
        train=train,
        test=test,
        definitions=definitions,
        paraphrase_to_term={p: t for t, ps in paraphrases.items() for p in ps},
        term_to_class={t: c for c in range(C) for t in terms[c]},
        rare_classes=rare,
        seed=seed,
        support=support,
    )
