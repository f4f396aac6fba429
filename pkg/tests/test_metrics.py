import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chargepred.errors import ContractError
from chargepred.metrics import (
    ConfusionCounts,
    accumulate,
    count_all,
    finalize,
    intra_class_variance,
    per_class_table,
    rows_to_csv,
)


def hot(C, *idx):
    v = [0] * C
    for i in idx:
        v[i] = 1
    return v


def test_accumulate_exact_match():
    c = ConfusionCounts.zeros(2)
    accumulate(hot(2, 1), hot(2, 1), c)
    assert c.tp.tolist() == [0, 1] and c.exact == 1


def test_accumulate_miss():
    c = ConfusionCounts.zeros(2)
    accumulate(hot(2, 0), hot(2, 1), c)
    assert c.fp.tolist() == [1, 0] and c.fn.tolist() == [0, 1] and c.exact == 0


def test_accumulate_superset():
    c = ConfusionCounts.zeros(2)
    accumulate(hot(2, 0, 1), hot(2, 1), c)
    assert c.tp.tolist() == [0, 1] and c.fp.tolist() == [1, 0] and c.exact == 0


def test_accumulate_length_mismatch():
    with pytest.raises(ContractError):
        accumulate([1, 0], [1, 0, 0], ConfusionCounts.zeros(2))


def test_perfect_predictions():
    gold = [hot(3, 0), hot(3, 1, 2), hot(3, 2)]
    r = finalize(count_all(gold, gold))
    assert (r.acc, r.mp, r.mr, r.mf1) == (1.0, 1.0, 1.0, 1.0)


def test_empty_class_counts_as_zero():
    r = finalize(count_all([hot(3, 0)], [hot(3, 0)]))
    assert r.f1 == [1.0, 0.0, 0.0]
    assert r.mf1 == pytest.approx(1 / 3)
    assert finalize(count_all([hot(3, 0)], [hot(3, 0)]), include_empty=False).mf1 == 1.0


def test_random_counts_match_per_class_arithmetic():
    rng = np.random.default_rng(0)
    c = ConfusionCounts(rng.integers(0, 20, 4), rng.integers(0, 20, 4), rng.integers(0, 20, 4), 7, 30)
    r = finalize(c)
    for k in range(4):
        tp, fp, fn = int(c.tp[k]), int(c.fp[k]), int(c.fn[k])
        p = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * rec / (p + rec) if p + rec else 0.0
        assert (r.precision[k], r.recall[k]) == (p, rec)
        assert r.f1[k] == pytest.approx(f, abs=1e-15)
    assert r.acc == 7 / 30


def test_finalize_requires_examples():
    with pytest.raises(ContractError):
        finalize(ConfusionCounts.zeros(2))


def test_counts_merge_like_a_single_pass():
    rng = np.random.default_rng(1)
    pred = rng.integers(0, 2, (40, 5))
    gold = rng.integers(0, 2, (40, 5))
    merged = count_all(pred[:15], gold[:15]) + count_all(pred[15:], gold[15:])
    whole = count_all(pred, gold)
    assert finalize(merged).to_dict() == finalize(whole).to_dict()


@settings(max_examples=50, deadline=None)
@given(arrays(np.int64, (12, 4), elements=st.integers(0, 1)), arrays(np.int64, (12, 4), elements=st.integers(0, 1)))
def test_duplicating_examples_is_scale_free(pred, gold):
    a = finalize(count_all(pred, gold))
    b = finalize(count_all(np.vstack([pred, pred]), np.vstack([gold, gold])))
    assert (a.acc, a.mp, a.mr, a.mf1) == (b.acc, b.mp, b.mr, b.mf1)
    assert abs(a.mf1 - float(np.mean(a.f1))) < 1e-12


def test_per_class_table_thresholds():
    r = finalize(count_all([hot(3, 0)] * 3, [hot(3, 0)] * 3), class_names=["a", "b", "c"])
    support = [100, 4, 9]
    assert [row["class"] for row in per_class_table(r, support, 100)] == ["b", "c"]
    assert per_class_table(r, support, 0) == []
    assert len(per_class_table(r, support, float("inf"))) == 3
    assert rows_to_csv(per_class_table(r, support, 5)).splitlines() == [
        "class,train_support,test_support,f1", "b,4,0,0.0"]


def test_report_text_and_json():
    r = finalize(count_all([hot(2, 0), hot(2, 1)], [hot(2, 0), hot(2, 0)]), class_names=["x", "y"])
    assert '"mf1"' in r.to_json()
    text = r.to_text()
    assert "MF1" in text and "x" in text.splitlines()[-2]


def test_variance_zero_when_identical():
    reps = {"Fc": np.ones((4, 3))}
    assert intra_class_variance(reps, [hot(2, 0)] * 2 + [hot(2, 1)] * 2, top_k=2)["Fc"] == 0.0


def test_variance_two_point_population():
    v = 1.7
    out = intra_class_variance({"x": np.array([[v], [-v]])}, [hot(1, 0), hot(1, 0)], top_k=1)
    assert out["x"] == pytest.approx(v * v, abs=1e-15)


def test_variance_uses_top_k_frequent_classes(caplog):
    labels = [hot(7, c) for c in [0] * 5 + [1] * 4 + [2] * 4 + [3] * 3 + [4] * 3 + [5] * 2 + [6]]
    rng = np.random.default_rng(2)
    reps = rng.normal(size=(len(labels), 3))
    L = np.array(labels, dtype=bool)
    expected = np.mean([np.mean(np.var(reps[L[:, c]], axis=0)) for c in range(5)])
    assert intra_class_variance({"F": reps}, labels, top_k=5)["F"] == pytest.approx(expected, abs=1e-15)
    with caplog.at_level(logging.WARNING):
        intra_class_variance({"F": reps}, labels, top_k=7)
    assert "skipped" in caplog.text
