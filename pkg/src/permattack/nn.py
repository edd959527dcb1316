"""Minimal differentiable-computation core.

Tensors are numpy float64 arrays; a model is an ordered list of layer specs
plus a parallel list of (weight, bias) parameter pairs.  Five layer kinds are
supported: Dense (affine on the last axis), PointwiseConv (1x1 kernel, stride
1, valid padding — a per-pixel channel mix over a rank-3 H x W x C input),
Flatten, Reshape and Dropout.

Forward/backward carry an explicit cache, so everything is pure and
reproducible: dropout masks derive from the seed passed to :func:`forward`.

Chains of consecutive linear PointwiseConv layers whose input and output both
have a single channel are algebraically rank-1 in the per-position scalar, so
forward/backward collapse them to channel-vector recurrences instead of
materialising (batch, H, W, C) intermediates.  The collapsed path computes
the same values and gradients as the generic one (up to float reassociation)
and is cross-checked against it in the test suite; pass
``collapse=False`` to force the generic path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import CheckpointError, InvalidParameterError, ShapeError

ACTIVATIONS = ("linear", "relu", "sigmoid", "softmax")


@dataclass(frozen=True)
class Dense:
    """Affine map on the last axis followed by an activation."""

    units: int
    activation: str = "linear"


@dataclass(frozen=True)
class PointwiseConv:
    """Per-pixel channel mixing: kernel (1,1), stride (1,1), valid padding."""

    filters: int
    activation: str = "linear"


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Reshape:
    shape: tuple


@dataclass(frozen=True)
class Dropout:
    """Inverted dropout with keep probability ``keep``; active only in train mode."""

    keep: float


LayerSpec = Union[Dense, PointwiseConv, Flatten, Reshape, Dropout]


@dataclass(frozen=True)
class ModelSpec:
    """Input shape (without batch axis) and the ordered layer list."""

    input_shape: tuple
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        layer_shapes(self)  # validates


def _check_activation(name: str):
    if name not in ACTIVATIONS:
        raise InvalidParameterError(f"unknown activation {name!r}")


def layer_shapes(model: ModelSpec) -> list[tuple]:
    """Output shape (without batch axis) after each layer; validates the spec."""
    shape = model.input_shape
    if any(d < 1 for d in shape):
        raise ShapeError(f"invalid input shape {shape}")
    shapes = []
    for i, layer in enumerate(model.layers):
        if isinstance(layer, Dense):
            _check_activation(layer.activation)
            if layer.units < 1:
                raise InvalidParameterError(f"layer {i}: units must be >= 1")
            shape = shape[:-1] + (layer.units,)
        elif isinstance(layer, PointwiseConv):
            _check_activation(layer.activation)
            if len(shape) != 3:
                raise ShapeError(f"layer {i}: PointwiseConv needs a rank-3 input, got {shape}")
            if layer.filters < 1:
                raise InvalidParameterError(f"layer {i}: filters must be >= 1")
            shape = shape[:2] + (layer.filters,)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Reshape):
            target = tuple(int(d) for d in layer.shape)
            if int(np.prod(target)) != int(np.prod(shape)):
                raise ShapeError(f"layer {i}: cannot reshape {shape} to {target}")
            shape = target
        elif isinstance(layer, Dropout):
            if not 0.0 < layer.keep <= 1.0:
                raise InvalidParameterError(f"layer {i}: keep must lie in (0, 1]")
        else:
            raise InvalidParameterError(f"layer {i}: unknown layer kind {layer!r}")
        shapes.append(shape)
    return shapes


def output_shape(model: ModelSpec) -> tuple:
    shapes = layer_shapes(model)
    return shapes[-1] if shapes else model.input_shape


def _affine_fans(model: ModelSpec) -> list[tuple[int, int] | None]:
    """(fan_in, fan_out) per layer for affine layers, None otherwise."""
    fans = []
    shape = model.input_shape
    for layer in model.layers:
        if isinstance(layer, Dense):
            fans.append((shape[-1], layer.units))
            shape = shape[:-1] + (layer.units,)
        elif isinstance(layer, PointwiseConv):
            fans.append((shape[-1], layer.filters))
            shape = shape[:2] + (layer.filters,)
        else:
            fans.append(None)
            if isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Reshape):
                shape = tuple(int(d) for d in layer.shape)
    return fans


def param_count(model: ModelSpec) -> int:
    """Closed-form trainable parameter count (weights + biases)."""
    total = 0
    for fans in _affine_fans(model):
        if fans is not None:
            fan_in, fan_out = fans
            total += fan_in * fan_out + fan_out
    return total


def layer_param_counts(model: ModelSpec) -> list[int]:
    """Per-layer parameter counts (zero for parameterless layers)."""
    return [(f[0] * f[1] + f[1]) if f else 0 for f in _affine_fans(model)]


# --- initialisation -----------------------------------------------------------------

def init_xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in))."""
    if fan_in < 1 or fan_out < 1:
        raise InvalidParameterError("fans must be >= 1")
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_xavier_normalized(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Weights ~ U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))."""
    if fan_in < 1 or fan_out < 1:
        raise InvalidParameterError("fans must be >= 1")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


_INITIALIZERS = {
    "xavier_uniform": init_xavier_uniform,
    "xavier_normalized": init_xavier_normalized,
}


def init_params(model: ModelSpec, seed: int, scheme: str = "xavier_uniform") -> list:
    """Per-layer (W, b) pairs; biases are exactly zero."""
    if scheme not in _INITIALIZERS:
        raise InvalidParameterError(f"unknown init scheme {scheme!r}")
    fn = _INITIALIZERS[scheme]
    rng = np.random.Generator(np.random.PCG64(seed))
    params = []
    for fans in _affine_fans(model):
        if fans is None:
            params.append(None)
        else:
            fan_in, fan_out = fans
            params.append((fn(fan_in, fan_out, rng), np.zeros(fan_out)))
    return params


# --- activations ----------------------------------------------------------------------

def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; rows sum to 1 and the map is shift-invariant."""
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return softmax(z)


def _act_backward_linear(g, z, y):
    return g


def _act_backward_relu(g, z, y):
    return g * (z > 0.0)


def _act_backward_sigmoid(g, z, y):
    return g * y * (1.0 - y)


def _act_backward_softmax(g, z, y):
    inner = (g * y).sum(axis=-1, keepdims=True)
    return y * (g - inner)


# Module-level table so tests can patch a derivative as a negative control.
ACTIVATION_GRADS = {
    "linear": _act_backward_linear,
    "relu": _act_backward_relu,
    "sigmoid": _act_backward_sigmoid,
    "softmax": _act_backward_softmax,
}


# --- forward / backward ------------------------------------------------------------------

def _find_chains(model: ModelSpec) -> list[tuple[int, int]]:
    """Maximal runs [start, end] of >= 2 linear PointwiseConv layers with
    single-channel input and output, eligible for the collapsed path."""
    shapes = [model.input_shape] + layer_shapes(model)
    chains = []
    i = 0
    n = len(model.layers)
    while i < n:
        layer = model.layers[i]
        if isinstance(layer, PointwiseConv) and layer.activation == "linear" and shapes[i][-1] == 1:
            j = i
            while (j + 1 < n and isinstance(model.layers[j + 1], PointwiseConv)
                   and model.layers[j + 1].activation == "linear"):
                j += 1
            if j > i and shapes[j + 1][-1] == 1:
                chains.append((i, j))
                i = j + 1
                continue
        i += 1
    return chains


def _affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    return (flat @ w + b).reshape(*lead, w.shape[1])


def forward(model: ModelSpec, params: list, x: np.ndarray, mode: str = "eval",
            seed: int | None = None, collapse: bool = True):
    """Run the model on a batch ``x`` of shape (batch, *input_shape).

    Returns ``(output, cache)``; feed the cache to :func:`backward`.  In train
    mode dropout masks are drawn from ``seed``; eval mode ignores dropout
    entirely, so it needs no seed and is deterministic.
    """
    if mode not in ("train", "eval"):
        raise InvalidParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != model.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} != model input {model.input_shape}")
    has_dropout = any(isinstance(l, Dropout) for l in model.layers)
    drop_rng = None
    if mode == "train" and has_dropout:
        if seed is None:
            raise InvalidParameterError("train-mode forward through Dropout requires a seed")
        drop_rng = np.random.Generator(np.random.PCG64(seed))

    chains = dict()
    if collapse:
        for a, b in _find_chains(model):
            chains[a] = b

    cache = {"mode": mode, "entries": [None] * len(model.layers), "x0": x, "collapse": collapse}
    i = 0
    while i < len(model.layers):
        if i in chains:
            end = chains[i]
            s = x[..., 0]  # per-position scalar driving the whole chain
            u = np.array([1.0])
            c = np.array([0.0])
            us, cs = [], []
            for j in range(i, end + 1):
                w, b = params[j]
                u = u @ w
                c = c @ w + b
                us.append(u)
                cs.append(c)
            cache["entries"][end] = {"kind": "chain", "start": i, "s": s, "us": us, "cs": cs}
            x = (s * u[0] + c[0])[..., None]
            i = end + 1
            continue
        layer = model.layers[i]
        if isinstance(layer, (Dense, PointwiseConv)):
            if isinstance(layer, PointwiseConv) and x.ndim != 4:
                raise ShapeError(f"layer {i}: PointwiseConv expects (batch, H, W, C), got {x.shape}")
            w, b = params[i]
            if x.shape[-1] != w.shape[0]:
                raise ShapeError(f"layer {i}: input width {x.shape[-1]} != weight fan-in {w.shape[0]}")
            z = _affine(x, w, b)
            y = _act_forward(layer.activation, z)
            entry = {"kind": "affine", "x": x, "act": layer.activation}
            if layer.activation == "relu":
                entry["z"] = z
            elif layer.activation in ("sigmoid", "softmax"):
                entry["y"] = y
            cache["entries"][i] = entry
            x = y
        elif isinstance(layer, Flatten):
            cache["entries"][i] = {"kind": "reshape", "shape": x.shape}
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Reshape):
            cache["entries"][i] = {"kind": "reshape", "shape": x.shape}
            x = x.reshape(x.shape[0], *layer.shape)
        elif isinstance(layer, Dropout):
            if mode == "train" and layer.keep < 1.0:
                mask = (drop_rng.random(x.shape) < layer.keep) / layer.keep
                cache["entries"][i] = {"kind": "dropout", "mask": mask}
                x = x * mask
            else:
                cache["entries"][i] = {"kind": "dropout", "mask": None}
        i += 1
    return x, cache


def backward(model: ModelSpec, params: list, cache: dict, grad_out: np.ndarray):
    """Gradients of every parameter given d(loss)/d(output).

    Returns ``(grads, grad_input)`` where ``grads`` mirrors ``params``.
    """
    if cache is None or "entries" not in cache:
        raise InvalidParameterError("backward needs the cache from a matching forward call")
    grads: list = [None] * len(model.layers)
    g = np.asarray(grad_out, dtype=np.float64)
    i = len(model.layers) - 1
    while i >= 0:
        entry = cache["entries"][i]
        if entry is None:
            raise InvalidParameterError(f"stale cache: no entry for layer {i}")
        if entry["kind"] == "chain":
            start = entry["start"]
            s = entry["s"]
            gamma = g[..., 0]
            s1 = float((s * gamma).sum())
            s2 = float(gamma.sum())
            # Inputs to layer j are s*u[j-1] + c[j-1], with u,c shifted by one.
            us = [np.array([1.0])] + entry["us"][:-1]
            cs = [np.array([0.0])] + entry["cs"][:-1]
            v = np.array([1.0])
            for j in range(i, start - 1, -1):
                w, _ = params[j]
                dw = s1 * np.outer(us[j - start], v) + s2 * np.outer(cs[j - start], v)
                db = s2 * v
                grads[j] = (dw, db)
                v = w @ v
            g = (gamma * v[0])[..., None]
            i = start - 1
            continue
        if entry["kind"] == "affine":
            x = entry["x"]
            act = entry["act"]
            g = ACTIVATION_GRADS[act](g, entry.get("z"), entry.get("y"))
            w, _ = params[i]
            flat_x = x.reshape(-1, x.shape[-1])
            flat_g = g.reshape(-1, g.shape[-1])
            dw = flat_x.T @ flat_g
            db = flat_g.sum(axis=0)
            grads[i] = (dw, db)
            g = (flat_g @ w.T).reshape(x.shape)
        elif entry["kind"] == "reshape":
            g = g.reshape(entry["shape"])
        elif entry["kind"] == "dropout":
            if entry["mask"] is not None:
                g = g * entry["mask"]
        i -= 1
    return grads, g


# --- losses ---------------------------------------------------------------------------

def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """(1/n) * sum((y - yhat)^2) over all n elements."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    return float(np.mean((target - pred) ** 2))


def loss_mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mse)/d(pred) = 2 (pred - target) / n."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    return 2.0 * (pred - target) / pred.size


def loss_sparse_cce(logits: np.ndarray, labels: np.ndarray) -> float:
    """-log softmax(logits)[label], averaged over the batch; includes the softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim == 1:
        logits = logits[None, :]
        labels = np.atleast_1d(labels)
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError("one class index per batch row required")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise InvalidParameterError("class index out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return float(np.mean(logz - picked))


def loss_nll_probs(probs: np.ndarray, labels: np.ndarray) -> float:
    """-log p[label] for a model whose output layer already applies softmax."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= probs.shape[-1]:
        raise InvalidParameterError("class index out of range")
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def loss_nll_probs_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    g = np.zeros_like(probs)
    rows = np.arange(len(labels))
    g[rows, labels] = -1.0 / (len(labels) * np.maximum(probs[rows, labels], 1e-300))
    return g


# --- optimizers -------------------------------------------------------------------------

@dataclass
class Sgd:
    lr: float
    tag = "sgd"


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    tag = "adam"


OptimizerState = Union[Sgd, Adam]


def make_optimizer(tag: str, lr: float, params: list) -> OptimizerState:
    if tag == "sgd":
        return Sgd(lr)
    if tag == "adam":
        m = [None if p is None else (np.zeros_like(p[0]), np.zeros_like(p[1])) for p in params]
        v = [None if p is None else (np.zeros_like(p[0]), np.zeros_like(p[1])) for p in params]
        return Adam(lr, m=m, v=v)
    raise InvalidParameterError(f"unknown optimizer {tag!r}")


def sgd_step(params: list, grads: list, state: Sgd):
    """theta <- theta - lr * grad, in place."""
    for p, g in zip(params, grads):
        if p is None:
            continue
        for slot in (0, 1):
            arr = p[slot]
            arr -= state.lr * g[slot]


def adam_step(params: list, grads: list, state: Adam):
    """Bias-corrected Adam update, in place; increments state.t."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p is None:
            continue
        for slot in (0, 1):
            m = state.m[i][slot]
            v = state.v[i][slot]
            m *= b1
            m += (1.0 - b1) * g[slot]
            v *= b2
            v += (1.0 - b2) * g[slot] ** 2
            arr = p[slot]
            arr -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


def optimizer_step(params: list, grads: list, state: OptimizerState):
    if isinstance(state, Sgd):
        sgd_step(params, grads, state)
    else:
        adam_step(params, grads, state)


# --- checkpoints ---------------------------------------------------------------------------

NDL_MAGIC = b"NDL1"
_NDL_VERSION = 1
_LAYER_TAGS = {Dense: 1, PointwiseConv: 2, Flatten: 3, Reshape: 4, Dropout: 5}
_ACT_IDS = {name: i for i, name in enumerate(ACTIVATIONS)}
_ACT_NAMES = {i: name for name, i in _ACT_IDS.items()}


def save_checkpoint(model: ModelSpec, params: list, path, optimizer_state: OptimizerState | None = None):
    """Lossless float64 serialisation of model, parameters and optimizer state."""
    with open(path, "wb") as f:
        f.write(NDL_MAGIC)
        f.write(bytes([_NDL_VERSION]))
        f.write(bytes([len(model.input_shape)]))
        f.write(np.asarray(model.input_shape, dtype="<u4").tobytes())
        f.write(struct.pack("<H", len(model.layers)))
        for layer in model.layers:
            f.write(bytes([_LAYER_TAGS[type(layer)]]))
            if isinstance(layer, Dense):
                f.write(struct.pack("<I", layer.units))
                f.write(bytes([_ACT_IDS[layer.activation]]))
            elif isinstance(layer, PointwiseConv):
                f.write(struct.pack("<I", layer.filters))
                f.write(bytes([_ACT_IDS[layer.activation]]))
            elif isinstance(layer, Reshape):
                f.write(bytes([len(layer.shape)]))
                f.write(np.asarray(layer.shape, dtype="<u4").tobytes())
            elif isinstance(layer, Dropout):
                f.write(struct.pack("<d", layer.keep))
        for p in params:
            if p is None:
                continue
            f.write(p[0].astype("<f8").tobytes())
            f.write(p[1].astype("<f8").tobytes())
        if optimizer_state is None:
            f.write(bytes([0]))
        elif isinstance(optimizer_state, Sgd):
            f.write(bytes([1]))
            f.write(struct.pack("<d", optimizer_state.lr))
        else:
            f.write(bytes([2]))
            f.write(struct.pack("<dddd", optimizer_state.lr, optimizer_state.beta1,
                                optimizer_state.beta2, optimizer_state.epsilon))
            f.write(struct.pack("<Q", optimizer_state.t))
            for moment in (optimizer_state.m, optimizer_state.v):
                for entry in moment:
                    if entry is None:
                        continue
                    f.write(entry[0].astype("<f8").tobytes())
                    f.write(entry[1].astype("<f8").tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.at = 0

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.blob):
            raise CheckpointError(f"checkpoint truncated at byte {self.at}")
        out = self.blob[self.at:self.at + n]
        self.at += n
        return out


def load_checkpoint(path):
    """Returns ``(model, params, optimizer_state_or_None)``."""
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != NDL_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    version = r.take(1)[0]
    if version != _NDL_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    rank = r.take(1)[0]
    input_shape = tuple(int(x) for x in np.frombuffer(r.take(4 * rank), dtype="<u4"))
    (n_layers,) = struct.unpack("<H", r.take(2))
    layers = []
    for _ in range(n_layers):
        tag = r.take(1)[0]
        if tag == 1:
            (units,) = struct.unpack("<I", r.take(4))
            layers.append(Dense(units, _ACT_NAMES[r.take(1)[0]]))
        elif tag == 2:
            (filters,) = struct.unpack("<I", r.take(4))
            layers.append(PointwiseConv(filters, _ACT_NAMES[r.take(1)[0]]))
        elif tag == 3:
            layers.append(Flatten())
        elif tag == 4:
            rrank = r.take(1)[0]
            layers.append(Reshape(tuple(int(x) for x in np.frombuffer(r.take(4 * rrank), dtype="<u4"))))
        elif tag == 5:
            (keep,) = struct.unpack("<d", r.take(8))
            layers.append(Dropout(keep))
        else:
            raise CheckpointError(f"unknown layer tag {tag}")
    model = ModelSpec(input_shape, tuple(layers))

    def read_tensor(shape):
        n = int(np.prod(shape))
        return np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)

    fans = _affine_fans(model)
    params = []
    for f_ in fans:
        if f_ is None:
            params.append(None)
        else:
            params.append((read_tensor((f_[0], f_[1])), read_tensor((f_[1],))))
    opt_tag = r.take(1)[0]
    opt = None
    if opt_tag == 1:
        (lr,) = struct.unpack("<d", r.take(8))
        opt = Sgd(lr)
    elif opt_tag == 2:
        lr, b1, b2, eps = struct.unpack("<dddd", r.take(32))
        (t,) = struct.unpack("<Q", r.take(8))
        moments = []
        for _ in range(2):
            entries = []
            for f_ in fans:
                if f_ is None:
                    entries.append(None)
                else:
                    entries.append((read_tensor((f_[0], f_[1])), read_tensor((f_[1],))))
            moments.append(entries)
        opt = Adam(lr, b1, b2, eps, t=t, m=moments[0], v=moments[1])
    elif opt_tag != 0:
        raise CheckpointError(f"unknown optimizer tag {opt_tag}")
    return model, params, opt


def serialized_param_count(path) -> int:
    """Number of float64 parameters stored in a checkpoint (optimizer excluded)."""
    model, params, _ = load_checkpoint(path)
    return sum(p[0].size + p[1].size for p in params if p is not None)


def clone_params(params: list) -> list:
    return [None if p is None else (p[0].copy(), p[1].copy()) for p in params]


# --- gradient checking ------------------------------------------------------------------------

@dataclass
class GradientCheckReport:
    max_rel_error: float
    tolerance: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(model: ModelSpec, loss: str = "mse", tolerance: float = 1e-4,
                   seed: int = 0, batch: int = 2, eps: float = 1e-6,
                   collapse: bool = True) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences.

    Inputs near a relu kink are resampled (up to 50 draws) so the
    non-differentiable point cannot poison the comparison.  Intended for
    small models: every parameter is perturbed twice.
    """
    rng_ = np.random.Generator(np.random.PCG64(seed))
    params = init_params(model, seed=seed + 1)
    for p in params:
        if p is not None:
            p[1][...] = rng_.normal(0, 0.1, size=p[1].shape)  # exercise bias gradients too
    out_shape = output_shape(model)

    has_relu = any(getattr(l, "activation", None) == "relu" for l in model.layers)
    for attempt in range(50):
        x = rng_.normal(0, 1.0, size=(batch, *model.input_shape))
        if loss == "mse":
            target = rng_.normal(0, 1.0, size=(batch, *out_shape))
        else:
            target = rng_.integers(0, out_shape[-1], size=batch)
        if not has_relu:
            break
        _, cache = forward(model, params, x, mode="train", seed=seed, collapse=False)
        near_kink = False
        for entry in cache["entries"]:
            if entry and entry.get("kind") == "affine" and "z" in entry:
                if np.abs(entry["z"]).min() < 1e-4:
                    near_kink = True
        if not near_kink:
            break

    def loss_value(ps):
        y, _ = forward(model, ps, x, mode="train", seed=seed, collapse=collapse)
        if loss == "mse":
            return loss_mse(y, target)
        return loss_nll_probs(y, target)

    y, cache = forward(model, params, x, mode="train", seed=seed, collapse=collapse)
    if loss == "mse":
        g0 = loss_mse_grad(y, target)
    else:
        g0 = loss_nll_probs_grad(y, target)
    grads, _ = backward(model, params, cache, g0)

    max_rel = 0.0
    checked = 0
    for li, p in enumerate(params):
        if p is None:
            continue
        for slot in (0, 1):
            arr = p[slot]
            gan = grads[li][slot]
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = arr[idx]
                arr[idx] = old + eps
                up = loss_value(params)
                arr[idx] = old - eps
                down = loss_value(params)
                arr[idx] = old
                num = (up - down) / (2 * eps)
                ana = gan[idx]
                denom = max(abs(num), abs(ana), 1e-8)
                max_rel = max(max_rel, abs(num - ana) / denom)
                checked += 1
    return GradientCheckReport(max_rel, tolerance, checked)
