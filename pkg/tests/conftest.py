import numpy as np
import pytest

from permattack import datasets


@pytest.fixture(scope="session")
def image_corpus():
    """Session-wide source images (official IDX files when present, else the
    built-in digits stand-in)."""
    return datasets.load_image_corpus("mnist")


@pytest.fixture(scope="session")
def fashion_corpus():
    return datasets.load_image_corpus("fashion")


@pytest.fixture(scope="session")
def classifier_checkpoint(tmp_path_factory, image_corpus):
    """Measurement classifier trained once per session; reused by evaluation
    tests and the acceptance suite."""
    from permattack import evaluate

    path = tmp_path_factory.mktemp("classifier") / "classifier.ndl"
    config = evaluate.classifier_config(checkpoint_path=str(path), epochs=40, seed=0)
    report, _ = evaluate.train_measurement_classifier(
        image_corpus.train.pixels, image_corpus.train_labels,
        image_corpus.test.pixels, image_corpus.test_labels, config)
    best = report.epochs[report.best_epoch - 1]
    return {"path": str(path), "report": report, "test_accuracy": best.accuracy}
