import numpy as np
import pytest

from permattack import evaluate
from permattack.errors import ShapeError
from permattack.pbox import Dims, GrayImage, Logistic, apply_pbox, gen_pbox


# --- dissimilarity -----------------------------------------------------------------------

def test_dissimilarity_zero_iff_identical():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, 64, dtype=np.uint8)
    assert evaluate.dissimilarity(img, img).mismatches == 0
    other = img.copy()
    other[5] ^= 1
    assert evaluate.dissimilarity(img, other).mismatches == 1


def test_dissimilarity_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 256, 784, dtype=np.uint8)
    b = rng.integers(0, 256, 784, dtype=np.uint8)
    d1 = evaluate.dissimilarity(a, b)
    d2 = evaluate.dissimilarity(b, a)
    assert d1.mismatches == d2.mismatches <= 784


def test_dissimilarity_dims_mismatch():
    with pytest.raises(ShapeError):
        evaluate.dissimilarity(np.zeros(4), np.zeros(5))


def test_dissimilarity_invariant_under_shared_pbox():
    rng = np.random.default_rng(2)
    dims = Dims(16, 16)
    key, _ = gen_pbox(Logistic(0.37, 3.93), dims)
    for _ in range(50):
        a = rng.integers(0, 256, 256, dtype=np.uint8)
        b = rng.integers(0, 256, 256, dtype=np.uint8)
        before = evaluate.dissimilarity(a, b).mismatches
        pa = apply_pbox(GrayImage(dims, a), key).pixels
        pb = apply_pbox(GrayImage(dims, b), key).pixels
        assert evaluate.dissimilarity(pa, pb).mismatches == before


# --- histogram -----------------------------------------------------------------------------

def test_histogram_constant_image():
    h = evaluate.intensity_histogram(np.full(100, 7, dtype=np.uint8))
    assert h[7] == 100 and h.sum() == 100 and np.count_nonzero(h) == 1


def test_histogram_invariant_under_pbox():
    rng = np.random.default_rng(3)
    dims = Dims(8, 8)
    key, _ = gen_pbox(Logistic(0.41, 3.97), dims)
    img = rng.integers(0, 256, 64, dtype=np.uint8)
    permuted = apply_pbox(GrayImage(dims, img), key).pixels
    assert np.array_equal(evaluate.intensity_histogram(img),
                          evaluate.intensity_histogram(permuted))


def test_histogram_mode_is_black_on_source_corpus(image_corpus):
    # Handwritten-digit images are black-dominated: bin 0 is the mode.
    h = evaluate.intensity_histogram(image_corpus.train.pixels[:500])
    assert h.argmax() == 0
    assert h.sum() == 500 * 784


def test_uniform_match_rate_within_3_sigma():
    rate, expected, sigma = evaluate.uniform_match_rate(1_000_000, seed=4)
    assert abs(rate - expected) <= 3 * sigma


# --- measurement classifier -------------------------------------------------------------------

def test_classifier_architecture():
    from permattack import nn

    model = evaluate.build_measurement_classifier()
    kinds = [type(l).__name__ for l in model.layers]
    assert kinds == ["Flatten", "Dense", "Dense"]
    assert model.layers[1].units == 128 and model.layers[1].activation == "relu"
    assert model.layers[2].units == 10 and model.layers[2].activation == "softmax"


def test_classifier_reaches_target_accuracy(classifier_checkpoint):
    assert classifier_checkpoint["test_accuracy"] >= 0.97


def test_identity_path_reproduces_own_accuracy(classifier_checkpoint, image_corpus):
    table = evaluate.classify_predictions(
        classifier_checkpoint["path"], image_corpus.test.pixels, image_corpus.test_labels)
    assert table.overall_accuracy == pytest.approx(classifier_checkpoint["test_accuracy"], abs=1e-9)
    assert set(table.per_class_accuracy) == set(range(10))


def test_noise_images_score_at_chance(classifier_checkpoint):
    rng = np.random.default_rng(5)
    noise = rng.integers(0, 256, (2000, 784), dtype=np.uint8)
    labels = rng.integers(0, 10, 2000)
    table = evaluate.classify_predictions(classifier_checkpoint["path"], noise, labels)
    assert abs(table.overall_accuracy - 0.10) <= 0.05


def test_train_accuracy_at_least_test_accuracy(classifier_checkpoint, image_corpus):
    # Soft sanity: the final model should fit its training set at least as
    # well as held-out data (typical-fit check, not a hard guarantee).
    train_table = evaluate.classify_predictions(
        classifier_checkpoint["path"], image_corpus.train.pixels, image_corpus.train_labels)
    assert train_table.overall_accuracy >= classifier_checkpoint["test_accuracy"] - 0.01


# --- report files -------------------------------------------------------------------------------

def test_eval_csv_schema(tmp_path):
    rows = [evaluate.EvalRow("cml", 1, 0.001, 0.999, 0.002, 0.95)]
    path = tmp_path / "eval.csv"
    evaluate.write_eval_csv(path, rows)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "pattern,rounds,loss,r2,mse,classifier_accuracy"
    assert lines[1].startswith("cml,1,")
    evaluate.write_eval_json(tmp_path / "eval.json", rows, extra={"note": "x"})
    import json

    doc = json.loads((tmp_path / "eval.json").read_text())
    assert doc["rows"][0]["pattern"] == "cml"
