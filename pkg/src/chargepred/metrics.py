"""Multi-label evaluation: exact-match accuracy, macro P/R/F1, variance diagnostic."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError

log = logging.getLogger(__name__)


@dataclass
class ConfusionCounts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    exact: int = 0
    n: int = 0
    label_correct: int = 0  # per-label agreements, for the micro-accuracy flag

    @classmethod
    def zeros(cls, n_classes: int) -> "ConfusionCounts":
        z = lambda: np.zeros(n_classes, dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z())

    @property
    def n_classes(self) -> int:
        return len(self.tp)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if other.n_classes != self.n_classes:
            raise ContractError("cannot merge counts over different label sets")
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                               self.exact + other.exact, self.n + other.n,
                               self.label_correct + other.label_correct)


def accumulate(pred: Sequence[int], gold: Sequence[int], counts: ConfusionCounts) -> None:
    """Add one example's multi-hot prediction/gold pair to ``counts``."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gold, dtype=bool)
    if p.shape != g.shape or p.shape != (counts.n_classes,):
        raise ContractError(f"pred {p.shape} and gold {g.shape} must both have length {counts.n_classes}")
    counts.tp += p & g
    counts.fp += p & ~g
    counts.fn += ~p & g
    counts.exact += int(np.array_equal(p, g))
    counts.label_correct += int(np.sum(p == g))
    counts.n += 1


def count_all(preds, golds) -> ConfusionCounts:
    preds = np.asarray(preds)
    golds = np.asarray(golds)
    counts = ConfusionCounts.zeros(golds.shape[1])
    for p, g in zip(preds, golds):
        accumulate(p, g, counts)
    return counts


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(len(num), dtype=np.float64)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


@dataclass
class MetricsReport:
    acc: float
    mp: float
    mr: float
    mf1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    n_examples: int
    label_accuracy: float
    class_names: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "acc": self.acc, "mp": self.mp, "mr": self.mr, "mf1": self.mf1,
            "label_accuracy": self.label_accuracy,
            "n_examples": self.n_examples,
            "per_class": [
                {"class": name, "precision": p, "recall": r, "f1": f, "support": s}
                for name, p, r, f, s in zip(self._names(), self.precision, self.recall, self.f1, self.support)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)

    def _names(self) -> list[str]:
        return self.class_names or [str(i) for i in range(len(self.f1))]

    def to_text(self) -> str:
        lines = [
            f"{'examples':<10}{self.n_examples:>8d}",
            f"{'Acc':<10}{self.acc:>8.4f}",
            f"{'MP':<10}{self.mp:>8.4f}",
            f"{'MR':<10}{self.mr:>8.4f}",
            f"{'MF1':<10}{self.mf1:>8.4f}",
            "",
        ]
        names = self._names()
        w = max(5, *(len(n) for n in names))
        lines.append(f"{'class':<{w}}  {'P':>7} {'R':>7} {'F1':>7} {'support':>8}")
        for name, p, r, f, s in zip(names, self.precision, self.recall, self.f1, self.support):
            lines.append(f"{name:<{w}}  {p:7.4f} {r:7.4f} {f:7.4f} {s:8d}")
        return "\n".join(lines) + "\n"


def finalize(counts: ConfusionCounts, n_examples: int | None = None, include_empty: bool = True,
             class_names: Sequence[str] = ()) -> MetricsReport:
    """Per-class and macro-averaged metrics, with 0/0 taken as 0.

    ``include_empty=False`` drops classes without gold support (and without
    predictions) from the macro averages.
    """
    n = counts.n if n_examples is None else n_examples
    if n < 1:
        raise ContractError("cannot finalize metrics over zero examples")
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f1 = _ratio(2 * p * r, p + r)
    keep = np.ones(len(tp), dtype=bool) if include_empty else (tp + fn + fp) > 0
    mean = lambda v: float(np.mean(v[keep])) if keep.any() else 0.0  # noqa: E731
    return MetricsReport(
        acc=counts.exact / n,
        mp=mean(p), mr=mean(r), mf1=mean(f1),
        precision=p.tolist(), recall=r.tolist(), f1=f1.tolist(),
        support=(tp + fn).tolist(),
        n_examples=n,
        label_accuracy=counts.label_correct / (n * len(tp)) if len(tp) else 0.0,
        class_names=list(class_names),
    )


def per_class_table(report: MetricsReport, train_support: Sequence[int],
                    support_threshold: float) -> list[dict]:
    """Classes with fewer than ``support_threshold`` training samples, rarest first."""
    names = report._names()
    rows = [
        {"class": names[i], "train_support": int(s), "test_support": report.support[i], "f1": report.f1[i]}
        for i, s in enumerate(train_support)
        if s < support_threshold
    ]
    rows.sort(key=lambda row: (row["train_support"], row["class"]))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["class", "train_support", "test_support", "f1"]
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in cols})
    return buf.getvalue()


def macro_f1_over(report: MetricsReport, classes: Sequence[int]) -> float:
    return float(np.mean([report.f1[i] for i in classes])) if len(classes) else 0.0


def intra_class_variance(representations: Mapping[str, np.ndarray], labels, top_k: int = 5) -> dict[str, float]:
    """Average within-class variance per representation stage.

    ``representations`` maps a stage name to an (N, d) array; ``labels`` is
    (N, C) multi-hot.  For each of the ``top_k`` most frequent classes the
    population variance of every dimension is taken over that class's rows
    and averaged over dimensions; the result is the mean over those classes.
    Classes with fewer than two samples are skipped.
    """
    labels = np.asarray(labels, dtype=bool)
    freq = labels.sum(axis=0)
    order = sorted(range(labels.shape[1]), key=lambda c: (-freq[c], c))[:top_k]
    chosen = []
    for c in order:
        if freq[c] < 2:
            log.warning("class %d has %d sample(s); skipped in variance diagnostic", c, freq[c])
        else:
            chosen.append(c)
    out = {}
    for stage, reps in representations.items():
        reps = np.asarray(reps, dtype=np.float64)
        if reps.shape[0] != labels.shape[0]:
            raise ContractError(f"{stage}: {reps.shape[0]} rows but {labels.shape[0]} labels")
        per_class = [float(np.mean(np.var(reps[labels[:, c]], axis=0))) for c in chosen]
        out[stage] = float(np.mean(per_class)) if per_class else float("nan")
    return out
