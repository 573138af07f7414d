import json

import numpy as np
import pytest

from dialogact.cli import main
from dialogact.embeddings import EmbeddingSet, save_word2vec_binary

SMALL = ["--epochs", "2", "--embedding-dim", "8", "--lstm-hidden", "6", "--mlp-hidden", "10", "--vocab-size", "120"]


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpora")
    assert main(["synth", "--n", "30", "--seed", "1", "--out", str(d / "train.tsv")]) == 0
    assert main(["synth", "--n", "8", "--seed", "2", "--out", str(d / "test.tsv")]) == 0
    return d / "train.tsv", d / "test.tsv"


@pytest.fixture(scope="module")
def trained(corpora, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    train, test = corpora
    rc = main(["train", "--corpus", str(train), "--test-corpus", str(test), "--out", str(out),
               "--export-embeddings", str(out / "emb.bin"), *SMALL])
    assert rc == 0
    return out


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["synth", "--n", "20", "--seed", "7", "--out", str(tmp_path / f"{name}.tsv")])
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert (tmp_path / "a.tsv.manifest.csv").read_bytes() == (tmp_path / "b.tsv.manifest.csv").read_bytes()


def test_train_writes_artifacts(trained):
    assert (trained / "model.darn").read_bytes()[:4] == b"DARN"
    header = (trained / "history.csv").read_text().splitlines()[0]
    assert header == "epoch,train_loss,train_acc,test_acc"
    echo = json.loads((trained / "config.json").read_text())
    assert echo["seed"] == 0 and echo["epochs"] == 2


def test_train_rerun_gives_identical_model(corpora, trained, tmp_path):
    train, test = corpora
    main(["train", "--corpus", str(train), "--test-corpus", str(test), "--out", str(tmp_path),
          "--export-embeddings", str(trained / "emb.bin"), *SMALL])
    assert (tmp_path / "model.darn").read_bytes() == (trained / "model.darn").read_bytes()
    assert (tmp_path / "history.csv").read_bytes() == (trained / "history.csv").read_bytes()


def test_eval_matches_training_report(corpora, trained, tmp_path, capsys):
    _, test = corpora
    rc = main(["eval", "--model", str(trained / "model.darn"), "--corpus", str(test),
               "--report", str(tmp_path / "r.csv")])
    assert rc == 0
    out = capsys.readouterr().out
    final = (trained / "history.csv").read_text().splitlines()[-1].split(",")
    report = (tmp_path / "r.csv").read_text().splitlines()[1].split(",")
    assert report[0] == final[3]
    assert "% ± " in out


def test_eval_rescoring_prints_second_line(corpora, trained, capsys):
    train, test = corpora
    assert main(["eval", "--model", str(trained / "model.darn"), "--corpus", str(test),
                 "--bigram-corpus", str(train)]) == 0
    assert "Viterbi-rescored accuracy" in capsys.readouterr().out


def test_eval_cross_validation_lists_folds(corpora, capsys, tmp_path):
    train, _ = corpora
    assert main(["eval", "--model", "maxent", "--cv", "3", "--corpus", str(train),
                 "--report", str(tmp_path / "cv.csv")]) == 0
    out = capsys.readouterr().out
    assert out.count("fold ") == 3
    assert (tmp_path / "cv.csv").read_text().splitlines()[0] == "fold,accuracy"


def test_eval_label_mismatch(trained, tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("d1\tzz\thello there\n")
    assert main(["eval", "--model", str(trained / "model.darn"), "--corpus", str(bad)]) == 1
    assert "zz" in capsys.readouterr().err


def test_malformed_corpus_line_reports_line_number(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("d1\tsd\tok fine\nonly-one-field\n")
    assert main(["train", "--corpus", str(bad), "--out", str(tmp_path / "o"), *SMALL]) == 1
    assert "bad.tsv:2" in capsys.readouterr().err


def test_init_pretrained_without_embeddings_is_usage_error(corpora, tmp_path, capsys):
    train, _ = corpora
    rc = main(["train", "--corpus", str(train), "--init", "pretrained", "--out", str(tmp_path)])
    assert rc == 2
    assert "--embeddings" in capsys.readouterr().err


def test_unknown_flag_rejected(corpora):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--corpus", str(corpora[0]), "--out", "x", "--bogus"])
    assert exc.value.code == 2


def test_config_file_supplies_defaults(corpora, tmp_path):
    train, _ = corpora
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"corpus": str(train), "out": str(tmp_path / "o"), "model": "maxent"}))
    assert main(["train", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o2")]) == 0
    assert (tmp_path / "o2" / "model.darn").exists()
    cfg.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(SystemExit):
        main(["train", "--config", str(cfg)])


def test_maxent_train_and_eval(corpora, tmp_path, capsys):
    train, test = corpora
    assert main(["train", "--model", "maxent", "--corpus", str(train), "--test-corpus", str(test),
                 "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["eval", "--model", str(tmp_path / "model.darn"), "--corpus", str(test),
                 "--report", str(tmp_path / "r.csv")]) == 0
    final = (tmp_path / "history.csv").read_text().splitlines()[-1].split(",")
    assert (tmp_path / "r.csv").read_text().splitlines()[1].split(",")[0] == final[3]


def test_train_with_oracle_init(corpora, trained, tmp_path):
    train, _ = corpora
    rc = main(["train", "--corpus", str(train), "--init", f"oracle:{trained / 'emb.bin'}",
               "--out", str(tmp_path), *SMALL])
    assert rc == 0


def test_analyze_query_first_at_similarity_one(tmp_path, capsys):
    emb = tmp_path / "e.bin"
    save_word2vec_binary(EmbeddingSet(["yes", "no", "not"], np.array([[1.0, 0.2], [0.3, 1.0], [0.5, 0.5]])), emb)
    assert main(["analyze", "--embeddings", str(emb), "--words", "yes", "--k", "1",
                 "--csv", str(tmp_path / "n.csv")]) == 0
    out = capsys.readouterr().out
    assert "yes (1.000)" in out
    rows = (tmp_path / "n.csv").read_text().splitlines()
    assert rows[0] == "query,rank,word,cosine" and rows[1].startswith("yes,1,yes,1.0")
    assert main(["analyze", "--embeddings", str(emb), "--pairs", "yes:no,yes:not"]) == 0
    assert "yes:no" in capsys.readouterr().out
    assert main(["analyze", "--embeddings", str(emb), "--words", "zzz"]) == 1
    assert main(["analyze", "--embeddings", str(emb), "--pairs", "yes"]) == 2


def test_analyze_reports_corrupt_file(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"1 x\n")
    assert main(["analyze", "--embeddings", str(bad), "--words", "yes"]) == 1
    assert "byte offset" in capsys.readouterr().err


def test_sweep_and_curve_csvs(corpora, trained, tmp_path):
    train, test = corpora
    assert main(["sweep", "--corpus", str(train), "--param", "max_len", "--values", "8,4", "--folds", "2",
                 "--out", str(tmp_path / "s.csv"), *SMALL]) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "param,value,fold,accuracy" and len(lines) == 1 + 2 + 1
    assert lines[-1] == "max_len,4,error,nan"
    assert main(["curve", "--corpus", str(train), "--test-corpus", str(test), "--sizes", "30,60",
                 "--modes", "random,oracle", "--oracle", str(trained / "emb.bin"),
                 "--out", str(tmp_path / "c.csv"), *SMALL]) == 0
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "mode,size,seed,accuracy" and len(lines) == 5
    assert main(["curve", "--corpus", str(train), "--test-corpus", str(test), "--modes", "oracle",
                 "--out", str(tmp_path / "c2.csv")]) == 2
