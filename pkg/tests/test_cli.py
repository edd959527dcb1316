import hashlib
import json

import numpy as np
import pytest

from permattack import datasets
from permattack.cli import main
from permattack.pbox import load_schedule


def sha256(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_gen_pbox_writes_rounds(tmp_path, capsys):
    out = tmp_path / "s.pbx1"
    rc = main(["gen-pbox", "--pattern", "logistic", "--rows", "28", "--cols", "28",
               "--rounds", "16", "--out", str(out)])
    assert rc == 0
    schedule = load_schedule(out)
    assert len(schedule) == 16
    assert "bijective" in capsys.readouterr().out


def test_gen_pbox_golden_digest(tmp_path):
    out = tmp_path / "one.pbx1"
    rc = main(["gen-pbox", "--pattern", "logistic", "--rows", "28", "--cols", "28",
               "--rounds", "1", "--out", str(out)])
    assert rc == 0
    digest = sha256(out)
    golden = "71bee9017630644112ffd71c83f4b341fcd8e97e561320983fd6cb41cc5fb280"
    assert digest == golden


def test_gen_pbox_unknown_pattern_usage_error(tmp_path, capsys):
    rc = main(["gen-pbox", "--pattern", "vortex", "--rows", "4", "--cols", "4",
               "--out", str(tmp_path / "x")])
    assert rc == 2
    capsys.readouterr()


def test_encrypt_decrypt_digest_equality(tmp_path, image_corpus):
    src = tmp_path / "plain.idx"
    datasets.write_idx(datasets.IdxImages(image_corpus.train.dims,
                                          image_corpus.train.pixels[:50]), src)
    cipher = tmp_path / "cipher.idx"
    keys = tmp_path / "keys.pbx1"
    rc = main(["encrypt", "--in", str(src), "--pattern", "cml", "--rounds", "8",
               "--out", str(cipher), "--keys-out", str(keys)])
    assert rc == 0
    assert sha256(cipher) != sha256(src)
    back = tmp_path / "back.idx"
    rc = main(["decrypt", "--in", str(cipher), "--keys", str(keys), "--out", str(back)])
    assert rc == 0
    assert sha256(back) == sha256(src)


def test_decrypt_dims_mismatch_exit_3(tmp_path, image_corpus):
    src = tmp_path / "plain.idx"
    datasets.write_idx(datasets.IdxImages(image_corpus.train.dims,
                                          image_corpus.train.pixels[:5]), src)
    keys = tmp_path / "keys.pbx1"
    rc = main(["gen-pbox", "--pattern", "cml", "--rows", "14", "--cols", "14",
               "--out", str(keys)])
    assert rc == 0
    rc = main(["decrypt", "--in", str(src), "--keys", str(keys),
               "--out", str(tmp_path / "x.idx")])
    assert rc == 3


def test_make_lwc_deterministic_digest(tmp_path, capsys):
    rc = main(["make-lwc", "--cipher", "katan32", "--train", "2000", "--val", "300",
               "--seed", "5", "--audit", "100", "--out", str(tmp_path / "a")])
    assert rc == 0
    out_a = capsys.readouterr().out
    assert "audit: 100/100" in out_a
    rc = main(["make-lwc", "--cipher", "katan32", "--train", "2000", "--val", "300",
               "--seed", "5", "--out", str(tmp_path / "b")])
    assert rc == 0
    capsys.readouterr()
    assert sha256(tmp_path / "a" / "train.lwc1") == sha256(tmp_path / "b" / "train.lwc1")
    manifest = datasets.DatasetManifest.from_json((tmp_path / "a" / "manifest.json").read_text())
    assert manifest.counts == {"train": 2000, "val": 300}


def test_make_lwc_strict_requires_seed(tmp_path, capsys):
    rc = main(["make-lwc", "--cipher", "simon32", "--train", "10", "--val", "5",
               "--test", "5", "--strict", "--out", str(tmp_path / "s")])
    assert rc == 2
    capsys.readouterr()


def test_train_decryptor_asserts_params_and_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    rc = main(["train", "--task", "decryptor", "--pattern", "cml", "--rounds", "1",
               "--train-count", "64", "--val-count", "16", "--epochs", "2",
               "--lr", "0.002", "--batch", "16", "--seed", "3", "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "679338 trainable parameters" in text
    assert (out / "checkpoint.ndl").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["epochs"][0]["epoch"] == 1
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["task"] == "decryptor" and resolved["seed"] == 3


def test_train_rerun_identical_digests(tmp_path):
    args = ["train", "--task", "katan", "--train-count", "512", "--val-count", "128",
            "--epochs", "2", "--lr", "0.01", "--batch", "64", "--seed", "7"]
    rc = main(args + ["--out", str(tmp_path / "r1")])
    assert rc == 0
    rc = main(args + ["--out", str(tmp_path / "r2")])
    assert rc == 0
    assert sha256(tmp_path / "r1" / "checkpoint.ndl") == sha256(tmp_path / "r2" / "checkpoint.ndl")
    r1 = json.loads((tmp_path / "r1" / "report.json").read_text())
    r2 = json.loads((tmp_path / "r2" / "report.json").read_text())
    assert r1["final_params_digest"] == r2["final_params_digest"]


def test_config_file_run_and_validation(tmp_path, capsys):
    cfg = {"task": "katan", "train_count": 256, "val_count": 64, "seed": 1,
           "train": {"epochs": 1, "learning_rate": 0.01, "batch_size": 64}}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    rc = main(["train", "--config", str(path), "--out", str(tmp_path / "out")])
    assert rc == 0
    capsys.readouterr()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"task": "warp-drive"}))
    rc = main(["train", "--config", str(bad), "--out", str(tmp_path / "out2")])
    assert rc == 2
    capsys.readouterr()


def test_transfer_zero_epoch_and_predict_eval_pipeline(tmp_path, capsys, image_corpus,
                                                       classifier_checkpoint):
    run = tmp_path / "train"
    rc = main(["train", "--task", "decryptor", "--pattern", "cml", "--rounds", "1",
               "--train-count", "200", "--val-count", "60", "--epochs", "30",
               "--lr", "0.002", "--batch", "32", "--seed", "1", "--out", str(run)])
    assert rc == 0
    # zero-epoch transfer evaluation on the fashion variant
    rc = main(["transfer", "--task", "decryptor", "--corpus", "fashion", "--pattern", "cml",
               "--rounds", "1", "--train-count", "200", "--val-count", "60", "--seed", "2",
               "--checkpoint", str(run / "checkpoint.ndl"), "--out", str(tmp_path / "tr")])
    assert rc == 0
    report = json.loads((tmp_path / "tr" / "report.json").read_text())
    assert len(report["epochs"]) == 1
    capsys.readouterr()

    # predict + eval on a small encrypted validation set
    plain = tmp_path / "plain.idx"
    labels = tmp_path / "labels.idx"
    datasets.write_idx(datasets.IdxImages(image_corpus.test.dims,
                                          image_corpus.test.pixels[:40]), plain)
    datasets.write_idx_labels(image_corpus.test_labels[:40], labels)
    cipher = tmp_path / "cipher.idx"
    rc = main(["encrypt", "--in", str(plain), "--pattern", "cml", "--rounds", "1",
               "--out", str(cipher)])
    assert rc == 0
    pred = tmp_path / "pred"
    rc = main(["predict", "--task", "decryptor", "--checkpoint", str(run / "checkpoint.ndl"),
               "--in", str(cipher), "--plain", str(plain), "--out", str(pred)])
    assert rc == 0
    assert (pred / "triptych.pgm").exists()
    assert (pred / "predicted.idx").exists()
    ev = tmp_path / "eval"
    rc = main(["eval", "--classifier", classifier_checkpoint["path"],
               "--predicted", str(pred / "predicted.idx"), "--labels", str(labels),
               "--pattern", "cml", "--rounds", "1",
               "--report", str(run / "report.json"), "--out", str(ev)])
    assert rc == 0
    capsys.readouterr()
    lines = (ev / "eval.csv").read_text().strip().splitlines()
    assert lines[0] == "pattern,rounds,loss,r2,mse,classifier_accuracy"
    assert lines[1].startswith("cml,1,")


def test_ga_command(tmp_path, capsys):
    out = tmp_path / "ga"
    rc = main(["ga", "--rows", "3", "--cols", "3", "--pattern", "logistic",
               "--population", "50", "--generations", "200", "--mutation", "0.3",
               "--min-run", "1", "--seed", "4", "--out", str(out)])
    assert rc == 0
    text = capsys.readouterr().out
    assert "recovered" in text
    assert (out / "convergence.csv").exists()
    keys = load_schedule(out / "best_key.pbx1")
    assert len(keys) == 1


def test_train_divergence_exit_4(tmp_path, capsys):
    rc = main(["train", "--task", "katan", "--train-count", "128", "--val-count", "32",
               "--epochs", "3", "--lr", "1e200", "--batch", "64", "--optimizer", "sgd",
               "--seed", "0", "--out", str(tmp_path / "dv")])
    assert rc == 4
    capsys.readouterr()
