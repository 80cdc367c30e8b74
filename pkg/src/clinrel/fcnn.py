"""Fully connected relation classifier in plain numpy.

Each hidden layer is affine -> batch norm -> leaky ReLU -> inverted dropout;
the output layer is affine only and feeds a softmax cross-entropy loss.
Everything runs in float64 so gradients can be checked by finite differences.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .features import LAYOUT_VERSION, FeatureConfig, FeatureVector, describe_layout, feature_length

log = logging.getLogger(__name__)

MODEL_VERSION = 1
MAGIC = b"CLRELFCN"
_PREFIX = struct.Struct("<8sII")  # magic, version, header byte length


class ModelFormatError(ValueError):
    pass


@dataclass
class LayerParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray
    bn_gamma: np.ndarray | None = None
    bn_beta: np.ndarray | None = None
    bn_running_mean: np.ndarray | None = None
    bn_running_var: np.ndarray | None = None

    @property
    def has_bn(self) -> bool:
        return self.bn_gamma is not None

    def trainable(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "weights", self.weights
        yield "bias", self.bias
        if self.has_bn:
            yield "bn_gamma", self.bn_gamma
            yield "bn_beta", self.bn_beta

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        yield from self.trainable()
        if self.has_bn:
            yield "bn_running_mean", self.bn_running_mean
            yield "bn_running_var", self.bn_running_var


@dataclass
class TrainConfig:
    dropout: float = 0.5
    batch_size: int = 64
    learning_rate: float = 3e-4
    epochs: int = 50
    lr_decay: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # also score the whole training set in inference mode after every epoch
    monitor: bool = True

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.batch_size < 2 or self.epochs < 1 or self.learning_rate <= 0 or self.lr_decay < 0:
            raise ValueError("batch_size >= 2, epochs >= 1, learning_rate > 0, lr_decay >= 0 required")


@dataclass
class FcnnModel:
    layers: list[LayerParams]
    class_labels: tuple[str, ...]
    feature_config: FeatureConfig | None = None
    leaky_slope: float = 0.01
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9
    version: int = MODEL_VERSION
    history: list[dict] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        self.class_labels = tuple(self.class_labels)
        if len(self.class_labels) < 2:
            raise ValueError("need at least 2 classes")
        if self.layers[-1].weights.shape[0] != len(self.class_labels):
            raise ValueError("output width must equal the number of classes")
        if self.feature_config is not None and self.input_dim != feature_length(self.feature_config):
            raise ValueError("first layer width does not match the feature config")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(l.weights.shape[0] for l in self.layers[:-1])

    def parameters(self) -> Iterator[tuple[tuple[int, str], np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, arr in layer.trainable():
                yield (i, name), arr

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self, X)


def init_model(
    input_dim: int,
    class_labels: Sequence[str],
    hidden_sizes: Sequence[int] = (200, 200),
    feature_config: FeatureConfig | None = None,
    rng: np.random.Generator | None = None,
    leaky_slope: float = 0.01,
) -> FcnnModel:
    """Glorot-uniform weights, zero biases, unit gamma. ``rng=None`` gives all-zero weights."""
    sizes = [input_dim, *hidden_sizes, len(class_labels)]
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if rng is None:
            w = np.zeros((fan_out, fan_in))
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layer = LayerParams(w, np.zeros(fan_out))
        if k < len(sizes) - 2:
            layer.bn_gamma = np.ones(fan_out)
            layer.bn_beta = np.zeros(fan_out)
            layer.bn_running_mean = np.zeros(fan_out)
            layer.bn_running_var = np.ones(fan_out)
        layers.append(layer)
    return FcnnModel(layers, tuple(class_labels), feature_config, leaky_slope)


# --------------------------------------------------------------------------
# forward / backward

@dataclass
class _LayerCache:
    x: np.ndarray
    xhat: np.ndarray | None = None
    inv_std: np.ndarray | None = None
    batch_mean: np.ndarray | None = None
    batch_var: np.ndarray | None = None
    pre_act: np.ndarray | None = None  # batch-norm output
    mask: np.ndarray | None = None


@dataclass
class ForwardCache:
    layers: list[_LayerCache]
    batch_size: int


def _as_matrix(model: FcnnModel, batch) -> np.ndarray:
    if isinstance(batch, FeatureVector):
        batch = [batch]
    if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], FeatureVector):
        batch = np.vstack([f.values for f in batch])
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"feature length {X.shape[-1]} does not match model input {model.input_dim}")
    return X


def dropout_masks(model: FcnnModel, batch_size: int, rate: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Inverted-dropout masks, one per hidden layer."""
    keep = 1.0 - rate
    return [(rng.random((batch_size, n)) < keep) / keep for n in model.hidden_sizes]


def forward(
    model: FcnnModel,
    batch,
    mode: str = "infer",
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    masks: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Logits for a batch. Train mode normalizes with batch statistics and applies
    dropout, either from explicit ``masks`` or drawn from ``rng``; it returns
    the cache needed by :func:`backward`. Infer mode uses running statistics."""
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    X = _as_matrix(model, batch)
    train = mode == "train"
    n = X.shape[0]
    if train and n < 2:
        raise ValueError("batch too small for batch norm")
    if train and masks is None and dropout > 0:
        if rng is None:
            raise ValueError("dropout in train mode needs an rng or explicit masks")
        masks = dropout_masks(model, n, dropout, rng)
    caches = []
    h = X
    for k, layer in enumerate(model.layers):
        c = _LayerCache(x=h)
        z = h @ layer.weights.T + layer.bias
        if not layer.has_bn:
            caches.append(c)
            h = z
            break
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            c.batch_mean, c.batch_var = mu, var
        else:
            mu, var = layer.bn_running_mean, layer.bn_running_var
        c.inv_std = 1.0 / np.sqrt(var + model.bn_eps)
        c.xhat = (z - mu) * c.inv_std
        c.pre_act = layer.bn_gamma * c.xhat + layer.bn_beta
        h = np.where(c.pre_act > 0, c.pre_act, model.leaky_slope * c.pre_act)
        if train and masks is not None:
            c.mask = masks[k]
            h = h * c.mask
        caches.append(c)
    return h, (ForwardCache(caches, n) if train else None)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient with respect to the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.intp).reshape(-1)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def backward(model: FcnnModel, cache: ForwardCache | None, dlogits: np.ndarray) -> dict:
    """Gradients keyed like :meth:`FcnnModel.parameters`."""
    if cache is None:
        raise ValueError("backward needs the cache of a train-mode forward pass")
    grads = {}
    g = np.asarray(dlogits, dtype=np.float64)
    n = cache.batch_size
    for k in range(len(model.layers) - 1, -1, -1):
        layer, c = model.layers[k], cache.layers[k]
        if layer.has_bn:
            if c.mask is not None:
                g = g * c.mask
            g = g * np.where(c.pre_act > 0, 1.0, model.leaky_slope)
            grads[(k, "bn_gamma")] = (g * c.xhat).sum(axis=0)
            grads[(k, "bn_beta")] = g.sum(axis=0)
            dxhat = g * layer.bn_gamma
            g = (c.inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - c.xhat * (dxhat * c.xhat).sum(axis=0))
        grads[(k, "weights")] = g.T @ c.x
        grads[(k, "bias")] = g.sum(axis=0)
        g = g @ layer.weights
    return grads


def loss_and_grads(model, X, y, masks=None) -> tuple[float, dict]:
    logits, cache = forward(model, X, "train", masks=masks)
    loss, dlogits = softmax_cross_entropy(logits, y)
    return loss, backward(model, cache, dlogits)


def numerical_gradients(model: FcnnModel, X, y, h: float = 1e-4, masks=None) -> dict:
    """Central finite differences of the train-mode loss, one parameter entry at a time."""
    def loss():
        logits, _ = forward(model, X, "train", masks=masks)
        return softmax_cross_entropy(logits, y)[0]

    out = {}
    for key, arr in model.parameters():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss()
            arr[idx] = orig - h
            down = loss()
            arr[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out[key] = g
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


# --------------------------------------------------------------------------
# optimization

def decayed_lr(learning_rate: float, lr_decay: float, epoch: int) -> float:
    return learning_rate / (1.0 + lr_decay * epoch)


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    params: dict,
    grads: dict,
    state: AdamState,
    lr_t: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for key, p in params.items():
        g = grads[key]
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr_t * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    """Split into the fewest batches of at most ``size``, with sizes differing by at most one.

    Even sizes keep batch-norm statistics comparable across steps; a ragged
    tail batch (or a batch of one) would not be.
    """
    n_batches = -(-len(order) // size)
    return np.array_split(order, n_batches)


def fit(
    X: np.ndarray,
    y: np.ndarray,
    class_labels: Sequence[str],
    train_config: TrainConfig | None = None,
    feature_config: FeatureConfig | None = None,
    hidden_sizes: Sequence[int] = (200, 200),
) -> FcnnModel:
    """Train on a feature matrix and integer labels."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if len(set(y.tolist())) < 2:
        raise ValueError("need at least 2 classes")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 examples")
    cfg = train_config or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    model = init_model(X.shape[1], class_labels, hidden_sizes, feature_config, rng)
    params = dict(model.parameters())
    state = AdamState()
    m = model.bn_momentum
    for epoch in range(cfg.epochs):
        lr_t = decayed_lr(cfg.learning_rate, cfg.lr_decay, epoch)
        total_loss, correct = 0.0, 0
        for idx in _batches(rng.permutation(len(y)), cfg.batch_size):
            logits, cache = forward(model, X[idx], "train", cfg.dropout, rng)
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}; lr={lr_t:g}, "
                    f"max |x|={np.abs(X[idx]).max():g}"
                )
            grads = backward(model, cache, dlogits)
            adam_step(params, grads, state, lr_t, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            for layer, c in zip(model.layers, cache.layers):
                if layer.has_bn:
                    layer.bn_running_mean *= m
                    layer.bn_running_mean += (1 - m) * c.batch_mean
                    layer.bn_running_var *= m
                    layer.bn_running_var += (1 - m) * c.batch_var
            total_loss += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y[idx]).sum())
        entry = {"epoch": epoch, "loss": total_loss / len(y), "accuracy": correct / len(y)}
        if cfg.monitor:
            logits, _ = forward(model, X, "infer")
            entry["eval_loss"] = softmax_cross_entropy(logits, y)[0]
            entry["eval_accuracy"] = float(np.mean(logits.argmax(axis=1) == y))
        model.history.append(entry)
        log.info("epoch %d loss %.6f accuracy %.4f", epoch, entry["loss"], entry["accuracy"])
    return model


@dataclass(frozen=True)
class RelationExample:
    features: FeatureVector
    label: str
    provenance: tuple = ()


def examples_to_arrays(examples: Sequence[RelationExample], class_labels: Sequence[str]):
    index = {c: i for i, c in enumerate(class_labels)}
    missing = {e.label for e in examples} - index.keys()
    if missing:
        raise ValueError(f"labels not in class_labels: {sorted(missing)}")
    X = np.vstack([e.features.values for e in examples]) if examples else np.zeros((0, 0))
    y = np.array([index[e.label] for e in examples], dtype=np.intp)
    return X, y


def train(
    examples: Sequence[RelationExample],
    class_labels: Sequence[str],
    feature_config: FeatureConfig | None,
    train_config: TrainConfig | None = None,
    hidden_sizes: Sequence[int] = (200, 200),
) -> FcnnModel:
    X, y = examples_to_arrays(examples, class_labels)
    if feature_config is not None and X.shape[1] != feature_length(feature_config):
        raise ValueError("example features do not match the feature config")
    return fit(X, y, class_labels, train_config, feature_config, hidden_sizes)


# --------------------------------------------------------------------------
# inference

def predict_proba(model: FcnnModel, X) -> np.ndarray:
    logits, _ = forward(model, X, "infer")
    return softmax(logits)


def predict(model: FcnnModel, features) -> tuple[str, np.ndarray]:
    """Label and class probabilities for one feature vector (ties -> lowest index)."""
    probs = predict_proba(model, features)[0]
    return model.class_labels[int(np.argmax(probs))], probs


# --------------------------------------------------------------------------
# serialization

def _header(model: FcnnModel) -> tuple[dict, list[np.ndarray]]:
    tensors, specs, offset = [], [], 0
    for i, layer in enumerate(model.layers):
        for name, arr in layer.tensors():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            specs.append({"layer": i, "name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.nbytes
            tensors.append(arr)
    fc = model.feature_config
    header = {
        "class_labels": list(model.class_labels),
        "hidden_sizes": list(model.hidden_sizes),
        "input_dim": model.input_dim,
        "leaky_slope": model.leaky_slope,
        "bn_eps": model.bn_eps,
        "bn_momentum": model.bn_momentum,
        "feature_config": None if fc is None else fc.to_dict(),
        "layout_version": LAYOUT_VERSION,
        "layout": None if fc is None else [list(s) for s in describe_layout(fc)],
        "tensors": specs,
        "payload_bytes": offset,
    }
    return header, tensors


def model_to_bytes(model: FcnnModel) -> bytes:
    header, tensors = _header(model)
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, model.version, len(hbytes)) + hbytes + b"".join(t.tobytes() for t in tensors)


def model_from_bytes(data: bytes) -> FcnnModel:
    if len(data) < _PREFIX.size:
        raise ModelFormatError("model file is empty or truncated")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from None
    payload = data[start + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise ModelFormatError(f"model payload is {len(payload)} bytes, expected {header['payload_bytes']}")
    if header.get("layout_version") != LAYOUT_VERSION:
        raise ModelFormatError(f"unsupported feature layout version {header.get('layout_version')}")
    n_layers = len(header["hidden_sizes"]) + 1
    fields: list[dict] = [{} for _ in range(n_layers)]
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"]))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        fields[entry["layer"]][entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
    layers = [LayerParams(**f) for f in fields]
    fc = header["feature_config"]
    return FcnnModel(
        layers,
        tuple(header["class_labels"]),
        None if fc is None else FeatureConfig.from_dict(fc),
        header["leaky_slope"],
        header["bn_eps"],
        header["bn_momentum"],
        version,
    )


def save_model(model: FcnnModel, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> FcnnModel:
    return model_from_bytes(Path(path).read_bytes())


def export_model_text(model: FcnnModel, path: str | Path) -> None:
    """Human-readable JSON dump of the header and every tensor."""
    header, _ = _header(model)
    header["parameters"] = [
        {"layer": i, "name": name, "values": arr.tolist()}
        for i, layer in enumerate(model.layers)
        for name, arr in layer.tensors()
    ]
    Path(path).write_text(json.dumps(header, indent=1, sort_keys=True), encoding="utf-8")
