"""Attack-quality measurement: dissimilarity counts, histograms, and the
small classifier used to score decryptor outputs quantitatively.

The dissimilarity of two equal-size images is the number of positions holding
different intensities; it is invariant under any shared permutation, which is
what makes it usable across P-box rounds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import attacks, nn, rng
from .errors import ShapeError


@dataclass(frozen=True)
class DissimilarityReport:
    mismatches: int
    total: int

    @property
    def rate(self) -> float:
        return self.mismatches / self.total if self.total else 0.0


def dissimilarity(a: np.ndarray, b: np.ndarray) -> DissimilarityReport:
    """Count positions i with a[i] != b[i]."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"image sizes differ: {a.shape} vs {b.shape}")
    return DissimilarityReport(int(np.count_nonzero(a != b)), a.size)


def intensity_histogram(pixels: np.ndarray) -> np.ndarray:
    """256-bin intensity counts; bins sum to the pixel count."""
    return np.bincount(np.asarray(pixels, dtype=np.uint8).ravel(), minlength=256)


def uniform_match_rate(n_positions: int = 1_000_000, seed: int = 0):
    """Per-position match rate of two independent uniform images.

    Returns ``(rate, expected, sigma)`` with expected 1/256; a sound sampler
    keeps the rate within a few sigma of the expectation.
    """
    draws_a = rng.stream_draw_array(rng.record_seed_array(seed, np.arange(n_positions, dtype=np.uint64)), 0)
    draws_b = rng.stream_draw_array(rng.record_seed_array(seed + 1, np.arange(n_positions, dtype=np.uint64)), 0)
    a = (draws_a & np.uint64(0xFF)).astype(np.uint8)
    b = (draws_b & np.uint64(0xFF)).astype(np.uint8)
    rate = float(np.mean(a == b))
    expected = 1.0 / 256.0
    sigma = float(np.sqrt(expected * (1 - expected) / n_positions))
    return rate, expected, sigma


# --- measurement classifier -----------------------------------------------------------

def build_measurement_classifier() -> nn.ModelSpec:
    """Flatten -> Dense 128 (relu) -> Dense 10 (softmax)."""
    return nn.ModelSpec((28, 28, 1), (nn.Flatten(), nn.Dense(128, "relu"), nn.Dense(10, "softmax")))


def classifier_config(checkpoint_path=None, epochs: int = 30, seed: int = 0) -> attacks.TrainConfig:
    return attacks.TrainConfig(
        learning_rate=0.001,
        batch_size=128,
        epochs=epochs,
        seed=seed,
        optimizer="adam",
        loss="sparse_cce",
        checkpoint_path=checkpoint_path,
    )


def train_measurement_classifier(train_images: np.ndarray, train_labels: np.ndarray,
                                 test_images: np.ndarray, test_labels: np.ndarray,
                                 config: attacks.TrainConfig):
    """Train the ten-class classifier; returns (report, params).

    Images are (n, 784) uint8; scaling matches the prediction path.
    """
    if len(np.unique(train_labels)) > 10 or train_labels.max() > 9:
        raise ShapeError("classifier expects ten classes (labels 0..9)")
    data = attacks.TrainData(
        train_images.astype(np.float64).reshape(-1, 28, 28, 1) / 255.0,
        np.asarray(train_labels, dtype=np.int64),
        test_images.astype(np.float64).reshape(-1, 28, 28, 1) / 255.0,
        np.asarray(test_labels, dtype=np.int64),
    )
    return attacks.train(build_measurement_classifier(), data, config)


def classify_images(checkpoint_path, images: np.ndarray) -> np.ndarray:
    """Predicted class per (n, 784) uint8 image."""
    model, params, _ = nn.load_checkpoint(checkpoint_path)
    x = images.astype(np.float64).reshape(-1, 28, 28, 1) / 255.0
    preds = []
    for at in range(0, len(x), 4096):
        out, _ = nn.forward(model, params, x[at:at + 4096], mode="eval")
        preds.append(out.argmax(axis=-1))
    return np.concatenate(preds)


@dataclass
class ClassificationTable:
    overall_accuracy: float
    per_class_accuracy: dict
    count: int

    def as_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "count": self.count,
        }


def classify_predictions(checkpoint_path, predicted_images: np.ndarray,
                         true_labels: np.ndarray) -> ClassificationTable:
    """Score decryptor outputs with the measurement classifier.

    This is the quantitative stand-in for eyeballing predicted images: if the
    decryptor reconstructs legible digits, the classifier recovers their
    labels.
    """
    pred = classify_images(checkpoint_path, predicted_images)
    labels = np.asarray(true_labels).ravel()
    if pred.shape != labels.shape:
        raise ShapeError("label count does not match image count")
    per_class = {}
    for cls in np.unique(labels):
        mask = labels == cls
        per_class[int(cls)] = float(np.mean(pred[mask] == cls))
    return ClassificationTable(float(np.mean(pred == labels)), per_class, len(labels))


# --- consolidated reports ----------------------------------------------------------------

@dataclass
class EvalRow:
    pattern: str
    rounds: int
    loss: float
    r2: float
    mse: float
    classifier_accuracy: float


def write_eval_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["pattern", "rounds", "loss", "r2", "mse", "classifier_accuracy"])
        for r in rows:
            writer.writerow([r.pattern, r.rounds, r.loss, r.r2, r.mse, r.classifier_accuracy])


def write_eval_json(path, rows, extra: dict | None = None):
    doc = {"rows": [vars(r) for r in rows]}
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
