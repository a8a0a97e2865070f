import json
import math

import pytest

import dapt


def test_tokenizer_round_trip(tmp_path):
    corpus = ["the reactor core uses heavy water", "heavy water moderates the reactor"]
    tok = dapt.Tokenizer.train(corpus, 300)
    assert tok.vocab_size <= 300
    for text in corpus + ["café ☃ [MASK]"]:
        assert tok.decode(tok.encode(text)) == text
    tok.save(tmp_path / "tok")
    again = dapt.Tokenizer.load(tmp_path / "tok")
    assert again.hash == tok.hash
    assert again.merges == tok.merges


def test_training_preconditions_raise_value_error():
    with pytest.raises(ValueError):
        dapt.Tokenizer.train(["abc"], 100)
    with pytest.raises(dapt.ValidationError):
        dapt.is_nfc_category(6)


def test_label_map():
    nfc = {code for code in range(0, 100) if _known(code) and dapt.is_nfc_category(code)}
    assert nfc == {5, 7, 11, 12, 21, 22, 38, 46, 73}


def _known(code):
    try:
        dapt.is_nfc_category(code)
        return True
    except ValueError:
        return False


def test_metrics_match_hand_counts():
    r = dapt.classification_metrics([1, 0, 0, 1, 1], [1, 1, 0, 0, 1], 2, "binary")
    assert r["accuracy"] == pytest.approx(0.6)
    assert r["precision"] == pytest.approx(2 / 3)
    w = dapt.classification_metrics([0, 2, 1, 1], [0, 1, 1, 2], 3)
    assert w["recall"] == w["accuracy"]


def test_cbtfidf_hand_example():
    scores = dapt.cbtfidf_scores(["xx yy", "xx", "zz", "xx qq"], [1, 1, 2, -1])
    assert scores[1]["xx"] == pytest.approx(2 / 3 * math.log(2), abs=1e-12)


def test_split_and_subsets():
    docs = [dapt.Document(f"d{i}", "text", [73 if i % 2 else 14]) for i in range(40)]
    docs += [dapt.Document(f"u{i}", "text") for i in range(5)]
    parts = dapt.split_corpus(docs, seed=1)
    ids = [d.id for part in parts.values() for d in part]
    assert sorted(ids) == sorted(d.id for d in docs)
    small, large = dapt.nested_subsets(docs[:40], [0.25, 1.0], 3)
    assert {d.id for d in small} <= {d.id for d in large}


def test_cli_pipeline(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    assert dapt.run_cli(["--quiet", "synth", "--docs", "20", "--out", str(corpus)]) == 0
    assert dapt.run_cli(["--quiet", "split", "--corpus", str(corpus), "--out", str(tmp_path / "splits")]) == 0
    manifest = json.loads((tmp_path / "splits" / "manifest.json").read_text())
    assert manifest["command"] == "split"
    assert dapt.run_cli(["--quiet", "tokenizer-train", "--corpus", str(corpus), "--vocab_size", "280",
                         "--out", str(tmp_path / "tok")]) == 0
    assert dapt.run_cli(["--quiet", "pretrain", "--corpus", str(corpus), "--tokenizer", str(tmp_path / "tok"),
                         "--hidden_dim", "8", "--ff_dim", "8", "--num_layers", "1", "--total_steps", "5",
                         "--out", str(tmp_path / "pt")]) == 0
    top = dapt.predict_top_k(tmp_path / "pt" / "model.ckpt", tmp_path / "tok", "heavy [MASK] fuel", 3)
    assert len(top) == 3
    assert top[0][1] >= top[1][1] >= top[2][1]
    assert dapt.run_cli(["split"]) == 1
