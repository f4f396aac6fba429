import json
import logging

import numpy as np
import pytest

from chargepred.data import (
    PAD,
    UNK,
    Vocabulary,
    build_training_vocab,
    build_vocab,
    load_charge_definitions,
    load_dataset,
    load_embeddings,
    read_embedding_file,
    tokenize,
    write_jsonl,
)
from chargepred.errors import FormatError, IngestionError


def test_tokenize_examples():
    assert tokenize("偷盗 电动车") == ["偷盗", "电动车"]
    assert tokenize("") == []
    assert tokenize("a  b") == ["a", "b"]
    assert tokenize(" a　b\tc\n") == ["a", "b", "c"]


def test_build_vocab_cutoff():
    v = build_vocab([["a", "b", "a"], ["a"]], min_count=2)
    assert v.itos == ["<pad>", "<unk>", "a"]
    assert v.lookup("b") == UNK


def test_build_vocab_tie_break_is_lexicographic():
    v = build_vocab([["c", "a", "b"], ["b", "a", "c"]], min_count=1)
    assert v.itos[2:] == ["a", "b", "c"]
    v2 = build_vocab([["z"], ["y", "z"]], min_count=1)
    assert v2.itos[2:] == ["z", "y"]


def test_build_vocab_empty_corpus():
    with pytest.raises(IngestionError):
        build_vocab([])


def test_vocab_round_trip_and_reserved_ids():
    v = Vocabulary(["x", "y", "z"])
    toks = ["z", "x", "y", "x"]
    assert v.decode(v.encode(toks)) == toks
    assert v.lookup("<pad>") == PAD and v.lookup("<unk>") == UNK
    assert Vocabulary.from_list(v.to_list()).itos == v.itos


def test_training_vocab_keeps_rare_definition_words():
    v = build_training_vocab([["a", "a", "b"]], [["rare", "a"]], min_count=2)
    assert "rare" in v and "b" not in v


def emb_file(tmp_path, rows):
    p = tmp_path / "emb.txt"
    p.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return p


def test_load_embeddings_copies_and_fills(tmp_path):
    p = emb_file(tmp_path, ["a 0.5 -0.25 1.0", "zz 9 9 9"])
    v = Vocabulary(["a", "b"])
    t1 = load_embeddings(p, v, np.random.default_rng(3))
    t2 = load_embeddings(p, v, np.random.default_rng(3))
    assert t1.dim == 3
    np.testing.assert_array_equal(t1.matrix[v.lookup("a")], [0.5, -0.25, 1.0])
    np.testing.assert_array_equal(t1.matrix[PAD], 0.0)
    b = t1.matrix[v.lookup("b")]
    assert np.all(np.abs(b) <= 0.1)
    np.testing.assert_array_equal(t1.matrix, t2.matrix)


def test_embedding_file_with_64_dims(tmp_path):
    p = emb_file(tmp_path, ["w " + " ".join(["0.1"] * 64)])
    assert load_embeddings(p, Vocabulary(["w"])).matrix.shape == (3, 64)


def test_embedding_file_inconsistent_dims(tmp_path):
    with pytest.raises(FormatError):
        read_embedding_file(emb_file(tmp_path, ["a 1 2", "b 1 2 3"]))


def write_facts(tmp_path, rows, name="facts.jsonl"):
    p = tmp_path / name
    write_jsonl(p, [{"fact": f, "meta": {"accusation": a}} for f, a in rows])
    return p


def test_load_dataset_labels_and_truncation(tmp_path, caplog):
    v = Vocabulary(["x", "y"])
    label_map = {"theft": 0, "fraud": 1, "arson": 2}
    long_fact = " ".join(["x"] * 600)
    p = write_facts(tmp_path, [("x y", ["fraud"]), (long_fact, ["theft", "arson"]),
                               ("y", ["bribery"]), ("x x", ["theft", "bribery"])])
    with caplog.at_level(logging.WARNING):
        exs = load_dataset(p, v, label_map)
    assert [e.labels for e in exs] == [(0, 1, 0), (1, 0, 1), (1, 0, 0)]
    assert len(exs[1].tokens) == 500
    assert "bribery" in caplog.text and "skipped 1" in caplog.text


def test_load_dataset_malformed_line_reports_number(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"fact": "x", "meta": {"accusation": ["a"]}}\n{oops\n', encoding="utf-8")
    with pytest.raises(FormatError, match=":2:"):
        load_dataset(p, Vocabulary(["x"]), {"a": 0})


def test_load_dataset_missing_fields(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps({"fact": "x"}) + "\n", encoding="utf-8")
    with pytest.raises(FormatError):
        load_dataset(p, Vocabulary(["x"]), {"a": 0})


def write_defs(tmp_path, rows):
    p = tmp_path / "defs.jsonl"
    write_jsonl(p, [{"name": n, "definition": d} for n, d in rows])
    return p


def test_load_definitions_ids_follow_file_order(tmp_path):
    p = write_defs(tmp_path, [("robbery", "a b"), ("theft", "c"), ("fraud", "d e f")])
    defs, label_map = load_charge_definitions(p, Vocabulary(list("abcdef")))
    assert [d.charge_id for d in defs] == [0, 1, 2]
    assert label_map == {"robbery": 0, "theft": 1, "fraud": 2}


def test_load_definitions_truncates(tmp_path):
    p = write_defs(tmp_path, [("long", " ".join(["a"] * 140))])
    defs, _ = load_charge_definitions(p, Vocabulary(["a"]))
    assert len(defs[0].tokens) == 110


def test_load_definitions_duplicate_and_empty(tmp_path):
    with pytest.raises(FormatError, match="robbery"):
        load_charge_definitions(write_defs(tmp_path, [("robbery", "a"), ("robbery", "b")]), Vocabulary())
    with pytest.raises(FormatError):
        load_charge_definitions(write_defs(tmp_path, [("x", "   ")]), Vocabulary())


def test_missing_file():
    with pytest.raises(IngestionError):
        load_dataset("/nonexistent/file.jsonl", Vocabulary(), {})
