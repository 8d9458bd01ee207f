# Copyright (c) 2026, rmlab developers
# SPDX-License-Identifier: Apache-2.0

import math

import pytest

import rmlab


def test_tokenizer_round_trip():
    ids = rmlab.encode("héllo", add_bos=True, add_eos=True)
    assert ids[0] == rmlab.BOS and ids[-1] == rmlab.EOS
    assert len(ids) == len("héllo".encode()) + 2
    assert rmlab.decode(ids) == "héllo"


def test_metric_anchors():
    assert abs(rmlab.geometric_mean(0.7300, 0.7253) - 0.7276) < 1e-4
    assert abs(rmlab.average_accuracy([0.8094, 0.7816, 0.8829, 0.8491]) - 0.8307) < 1e-4
    assert rmlab.accuracy_from_scores([1.0, 0.0, 2.0], [0.0, 0.0, 3.0]) == (1 / 3, 1, 1, 3)
    with pytest.raises(rmlab.ContractError):
        rmlab.geometric_mean(1.5, 0.5)


def test_readability_and_tfidf():
    s = rmlab.response_stats("The cat sat on the mat.")
    assert abs(s["flesch_reading_ease"] - 116.145) < 1e-3
    assert abs(s["gunning_fog"] - 2.4) < 1e-3
    idf, score = rmlab.tfidf_matrix({"a": "red fish", "b": "blue fish", "c": "fish", "d": "fish sky"})
    assert abs(idf["fish"] - (math.log(5 / 4) + 1)) < 1e-12
    assert score["a"]["red"] == pytest.approx(0.5 * (math.log(5 / 1) + 1), abs=1e-12)


def test_dsp_pairs_and_split(tmp_path):
    domains = ["academy", "business", "entertainment", "literature", "normal"]
    rec = rmlab.DomainRecord("q", {d: "answer " + d for d in domains})
    pairs = rmlab.build_dsp_pairs([rec], "academy")
    assert len(pairs) == 4
    assert all(p.chosen == "answer academy" for p in pairs)
    path = tmp_path / "pairs.jsonl"
    rmlab.write_pairs(path, pairs)
    assert rmlab.read_pairs(path) == pairs
    items = rmlab.marker_pairs("general_a", 20, 3)
    train, test = rmlab.split(items, 0.75, 5)
    assert len(train) == 15 and len(test) == 5
    assert rmlab.split(items, 0.75, 5) == (train, test)
    with pytest.raises(rmlab.ConfigError):
        rmlab.build_dsp_pairs([rec], "weather")


def test_train_and_evaluate_through_cli(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    corpus.write_text("".join('{"text": "ask abcd: xyzQ."}\n' for _ in range(8)))
    pairs = rmlab.marker_pairs("general_a", 8, 1)
    rmlab.write_pairs(tmp_path / "pairs.jsonl", pairs)
    tiny = ["--embed-dim", "16", "--layers", "1", "--heads", "2", "--ffn-dim", "32",
            "--max-position", "32", "--max-len", "32", "--max-steps", "2", "--batch-size", "4"]
    assert rmlab.run_cli(["train-lm", "--corpus", str(corpus), "--run-dir", str(tmp_path / "lm")] + tiny) == 0
    assert not rmlab.checkpoint_info(tmp_path / "lm" / "checkpoint.pfrg")["has_reward_head"]
    assert rmlab.run_cli(["train-grft", "--base", str(tmp_path / "lm" / "checkpoint.pfrg"),
                          "--pairs", str(tmp_path / "pairs.jsonl"), "--batch-size", "4",
                          "--max-steps", "2", "--max-len", "32",
                          "--run-dir", str(tmp_path / "grft")]) == 0
    ckpt = tmp_path / "grft" / "checkpoint.pfrg"
    report = rmlab.evaluate(ckpt, {"test": pairs}, max_len=32)
    assert report["sets"]["test"]["pairs"] == 8
    assert 0.0 <= report["sets"]["test"]["accuracy"] <= 1.0
    assert report["checkpoint_hash"] == rmlab.checkpoint_info(ckpt)["content_hash"]
    assert rmlab.run_cli(["evaluate"]) == 1
