"""Fixed attack architectures, the training loop and prediction helpers.

Three networks are built here, with their parameter counts asserted at build
time so any architectural drift fails fast:

* decryptor — 28x28 image in, 28x28 image out, 679,338 parameters
  (pointwise-conv group 31,949 + dense 615,440 + pointwise-conv group 31,949),
* KATAN model — 32 ciphertext bits in, 3,748 parameters; dense layers apply
  along the last axis of a (32, 1) input, so the raw output is 32 copies of a
  32-wide prediction which training broadcasts targets across and prediction
  averages back down,
* SIMON model — 64 plaintext||ciphertext bits in, 64 key bits out, sigmoid
  activations with per-layer dropout keeps, 20,896 parameters.

Image tensors are scaled to [0, 1] on the way into a model and back to
0..255 on the way out; R^2 and MSE ratios are unaffected by the shared scale.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, nn
from .errors import (ArchitectureMismatchError, DivergenceError, InvalidParameterError,
                     ShapeError)

DECRYPTOR_PARAMS = 679_338
DECRYPTOR_CONV_PARAMS = 31_949
DECRYPTOR_DENSE_PARAMS = 615_440
KATAN_MODEL_PARAMS = 3_748
SIMON_MODEL_PARAMS = 20_896

SIMON_DROPOUT_KEEPS = (0.9, 0.8, 0.7, 0.9, 0.8, 0.7, 0.9)


def build_decryptor() -> nn.ModelSpec:
    """Conv group (140..1) -> dense 784 -> deconv group (28..1), all linear."""
    conv = [nn.PointwiseConv(f) for f in (140, 112, 84, 56, 28, 1)]
    deconv = [nn.PointwiseConv(f) for f in (28, 56, 84, 112, 140, 1)]
    model = nn.ModelSpec(
        (28, 28, 1),
        (*conv, nn.Flatten(), nn.Dense(784), nn.Reshape((28, 28, 1)), *deconv),
    )
    counts = nn.layer_param_counts(model)
    assert sum(counts[0:6]) == DECRYPTOR_CONV_PARAMS, counts
    assert counts[7] == DECRYPTOR_DENSE_PARAMS, counts
    assert sum(counts[9:15]) == DECRYPTOR_CONV_PARAMS, counts
    assert nn.param_count(model) == DECRYPTOR_PARAMS
    return model


def build_katan_model() -> nn.ModelSpec:
    """Nine relu dense layers (widths 32..12..32) along the last axis of (32, 1)."""
    widths = (32, 24, 20, 16, 12, 16, 20, 24, 32)
    model = nn.ModelSpec(
        (32, 1),
        (*[nn.Dense(w, "relu") for w in widths], nn.Flatten()),
    )
    assert nn.param_count(model) == KATAN_MODEL_PARAMS
    assert nn.layer_param_counts(model)[0] == 64
    return model


def build_simon_model() -> nn.ModelSpec:
    """Sigmoid dense stack 16..64 with per-layer dropout keeps, output width 64."""
    widths = (16, 32, 64, 128, 16, 32, 64)
    layers = []
    for w, keep in zip(widths, SIMON_DROPOUT_KEEPS):
        layers.append(nn.Dense(w, "sigmoid"))
        layers.append(nn.Dropout(keep))
    layers.append(nn.Dense(64, "sigmoid"))
    model = nn.ModelSpec((64,), tuple(layers))
    assert nn.param_count(model) == SIMON_MODEL_PARAMS
    return model


# --- training ------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 2000
    epochs: int = 1500
    seed: int = 0
    optimizer: str = "adam"
    init: str = "xavier_uniform"
    loss: str = "mse"
    checkpoint_path: str | None = None
    lr_decay: float | None = None  # per-epoch multiplicative factor
    shuffle: bool = True

    def validate(self, allow_zero_epochs: bool = False):
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        floor = 0 if allow_zero_epochs else 1
        if self.epochs < floor:
            raise InvalidParameterError(f"epochs must be >= {floor}")
        if self.learning_rate <= 0:
            raise InvalidParameterError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.init not in ("xavier_uniform", "xavier_normalized"):
            raise InvalidParameterError(f"unknown init {self.init!r}")
        if self.loss not in ("mse", "sparse_cce"):
            raise InvalidParameterError(f"unknown loss {self.loss!r}")
        if self.lr_decay is not None and not 0.0 < self.lr_decay <= 1.0:
            raise InvalidParameterError("lr_decay must lie in (0, 1]")

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "init": self.init,
            "loss": self.loss,
            "checkpoint_path": self.checkpoint_path,
            "lr_decay": self.lr_decay,
            "shuffle": self.shuffle,
        }


@dataclass
class TrainData:
    """Float64 tensors ready for the model; classification targets are ints."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    r2: float
    mse: float
    accuracy: float | None = None


@dataclass
class TrainReport:
    epochs: list
    best_epoch: int
    best_val_loss: float
    wall_time_s: float
    final_params_digest: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "best_epoch": self.best_epoch,
                "best_val_loss": self.best_val_loss,
                "wall_time_s": self.wall_time_s,
                "final_params_digest": self.final_params_digest,
                "epochs": [
                    {k: v for k, v in vars(e).items() if v is not None} for e in self.epochs
                ],
            },
            indent=2,
        )


def _loss_and_grad(loss: str, pred: np.ndarray, target: np.ndarray):
    if loss == "mse":
        return nn.loss_mse(pred, target), nn.loss_mse_grad(pred, target)
    return nn.loss_nll_probs(pred, target), nn.loss_nll_probs_grad(pred, target)


def _eval_metrics(loss: str, model, params, x, y, batch_size: int = 4096):
    preds = []
    for at in range(0, len(x), batch_size):
        out, _ = nn.forward(model, params, x[at:at + batch_size], mode="eval")
        preds.append(out)
    pred = np.concatenate(preds, axis=0)
    if loss == "mse":
        val_loss = nn.loss_mse(pred, y)
        suite = metrics.metric_suite(pred, y)
        return val_loss, EpochStats(0, 0.0, val_loss, suite.r2, suite.mse)
    val_loss = nn.loss_nll_probs(pred, y)
    acc = metrics.metric_accuracy(pred.argmax(axis=-1), y)
    return val_loss, EpochStats(0, 0.0, val_loss, 0.0, val_loss, accuracy=acc)


def params_digest(params: list) -> str:
    import hashlib

    h = hashlib.sha256()
    for p in params:
        if p is None:
            continue
        h.update(p[0].tobytes())
        h.update(p[1].tobytes())
    return h.hexdigest()


def train(model: nn.ModelSpec, data: TrainData, config: TrainConfig,
          params: list | None = None) -> tuple[TrainReport, list]:
    """Mini-batch training with best-checkpoint retention.

    Per epoch, per batch: forward, loss, backward, optimizer step; optional
    multiplicative learning-rate decay per epoch; validation once per epoch
    after the last batch.  The checkpoint with the lowest validation loss
    seen so far is kept at ``config.checkpoint_path``.  Raises
    :class:`DivergenceError` when the loss stops being finite.

    Returns ``(report, best_params)``.
    """
    config.validate(allow_zero_epochs=params is not None)
    if len(data.x_train) == 0 or len(data.x_val) == 0:
        raise InvalidParameterError("training and validation sets must be non-empty")
    if data.x_train.shape[1:] != model.input_shape:
        raise ShapeError(
            f"corpus sample shape {data.x_train.shape[1:]} != model input {model.input_shape}"
        )
    start = time.time()
    if params is None:
        params = nn.init_params(model, seed=config.seed, scheme=config.init)
    opt = nn.make_optimizer(config.optimizer, config.learning_rate, params)
    order_rng = np.random.Generator(np.random.PCG64(config.seed ^ 0x5EED))
    n = len(data.x_train)
    stats: list[EpochStats] = []
    best_val = np.inf
    best_epoch = 0
    best_params = nn.clone_params(params)
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = order_rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        seen = 0
        for at in range(0, n, config.batch_size):
            idx = order[at:at + config.batch_size]
            xb, yb = data.x_train[idx], data.y_train[idx]
            out, cache = nn.forward(model, params, xb, mode="train", seed=config.seed + step)
            loss, grad = _loss_and_grad(config.loss, out, yb)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}, step {step}")
            grads, _ = nn.backward(model, params, cache, grad)
            nn.optimizer_step(params, grads, opt)
            total += loss * len(idx)
            seen += len(idx)
            step += 1
        if config.lr_decay is not None:
            opt.lr *= config.lr_decay
        val_loss, ep = _eval_metrics(config.loss, model, params, data.x_val, data.y_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        ep.epoch = epoch
        ep.train_loss = total / seen
        stats.append(ep)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = nn.clone_params(params)
            if config.checkpoint_path:
                nn.save_checkpoint(model, best_params, config.checkpoint_path, opt)
    if config.epochs == 0:
        # Zero-epoch mode: evaluate only (transfer without training).
        val_loss, ep = _eval_metrics(config.loss, model, params, data.x_val, data.y_val)
        stats.append(ep)
        best_val = val_loss
        best_params = nn.clone_params(params)
        if config.checkpoint_path:
            nn.save_checkpoint(model, best_params, config.checkpoint_path)
    report = TrainReport(
        epochs=stats,
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        wall_time_s=time.time() - start,
        final_params_digest=params_digest(best_params),
    )
    return report, best_params


def transfer_train(checkpoint_path, data: TrainData, config: TrainConfig,
                   expect_model: nn.ModelSpec | None = None) -> tuple[TrainReport, list]:
    """Train starting from checkpointed weights instead of a fresh init.

    With ``epochs=0`` this evaluates the transferred weights on the new
    corpus without any training.  The checkpoint architecture must equal
    ``expect_model`` when given.
    """
    model, params, _ = nn.load_checkpoint(checkpoint_path)
    if expect_model is not None and (model.input_shape != expect_model.input_shape
                                     or model.layers != expect_model.layers):
        raise ArchitectureMismatchError(
            f"checkpoint architecture {model.layers} does not match expected {expect_model.layers}"
        )
    report, best = train(model, data, config, params=params)
    return report, best


# --- prediction -----------------------------------------------------------------------

def predict_images(checkpoint_path, images: np.ndarray) -> np.ndarray:
    """Eval-mode decryption of (n, cells) uint8 cipher images.

    Outputs are clamped to [0, 255] and rounded for export.
    """
    model, params, _ = nn.load_checkpoint(checkpoint_path)
    h, w, _c = model.input_shape
    x = images.astype(np.float64).reshape(-1, h, w, 1) / 255.0
    out, _ = nn.forward(model, params, x, mode="eval")
    pixels = np.clip(np.round(out.reshape(len(images), -1) * 255.0), 0, 255)
    return pixels.astype(np.uint8)


def predict_bits(checkpoint_path, inputs: np.ndarray, threshold: float = 0.5,
                 target_width: int | None = None) -> np.ndarray:
    """Eval-mode bit prediction, thresholded at ``threshold`` (ties -> 1).

    When the model output is ``k * target_width`` wide (the KATAN broadcast
    head), the k copies are averaged before thresholding.
    """
    model, params, _ = nn.load_checkpoint(checkpoint_path)
    x = inputs.astype(np.float64)
    if x.ndim == 2 and len(model.input_shape) == 2:
        x = x.reshape(len(x), *model.input_shape)
    out, _ = nn.forward(model, params, x, mode="eval")
    out = out.reshape(len(x), -1)
    if target_width is not None and out.shape[1] != target_width:
        if out.shape[1] % target_width != 0:
            raise ShapeError(f"cannot reduce width {out.shape[1]} to {target_width}")
        out = out.reshape(len(x), -1, target_width).mean(axis=1)
    return (out >= threshold).astype(np.uint8)


# --- corpus adapters --------------------------------------------------------------------

def image_pairs_to_traindata(train_cipher, train_plain, val_cipher, val_plain,
                             dims) -> TrainData:
    """Scale (n, cells) uint8 pixel matrices into (n, H, W, 1) float tensors."""
    def prep(a):
        return a.astype(np.float64).reshape(-1, dims.rows, dims.cols, 1) / 255.0

    return TrainData(prep(train_cipher), prep(train_plain), prep(val_cipher), prep(val_plain))


def katan_split_to_traindata(train_split, val_split) -> TrainData:
    """Ciphertext bits as (n, 32, 1) inputs; targets tiled across the 32
    broadcast positions to match the model's flattened (32*32,) output."""
    def prep_x(s):
        return s.inputs.astype(np.float64).reshape(-1, 32, 1)

    def prep_y(s):
        return np.tile(s.targets.astype(np.float64), 32)

    return TrainData(prep_x(train_split), prep_y(train_split), prep_x(val_split), prep_y(val_split))


def simon_split_to_traindata(train_split, val_split) -> TrainData:
    return TrainData(
        train_split.inputs.astype(np.float64),
        train_split.targets.astype(np.float64),
        val_split.inputs.astype(np.float64),
        val_split.targets.astype(np.float64),
    )


# --- PGM export ---------------------------------------------------------------------------

def write_pgm(path, image: np.ndarray):
    """Binary PGM (P5) export of a 2-D uint8 image."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise ShapeError("PGM export expects a 2-D image")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        f.write(img.tobytes())


def write_triptychs(path, cipher: np.ndarray, predicted: np.ndarray, plain: np.ndarray,
                    dims, count: int = 16, gap: int = 2):
    """Grid of cipher/predicted/plain rows for visual inspection."""
    count = min(count, len(cipher))
    h, w = dims.rows, dims.cols
    grid = np.full((3 * h + 2 * gap, count * w + (count - 1) * gap), 255, dtype=np.uint8)
    for i in range(count):
        x0 = i * (w + gap)
        grid[0:h, x0:x0 + w] = cipher[i].reshape(h, w)
        grid[h + gap:2 * h + gap, x0:x0 + w] = predicted[i].reshape(h, w)
        grid[2 * (h + gap):2 * (h + gap) + h, x0:x0 + w] = plain[i].reshape(h, w)
    write_pgm(path, grid)
