"""Minimal trainable classifier substrate: dense and small conv nets.

Forward/backward passes are plain numpy; parameters live in a ParamSet of
flat per-layer vectors so the frequency-domain machinery can treat every
parameter block uniformly.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    ConfigRangeError,
    FormatError,
    InvalidInputError,
    StructuralError,
    TrainingDivergedError,
)

# ---------------------------------------------------------------------------
# network description


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Conv:
    in_ch: int
    out_ch: int
    k: int


@dataclass(frozen=True)
class MaxPool:
    k: int


@dataclass(frozen=True)
class Activation:
    kind: str  # relu | tanh


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_shape: tuple
    classes: int

    def __post_init__(self):
        if self.classes < 2:
            raise StructuralError("class count must be >= 2")
        shapes = self.layer_shapes()
        if shapes[-1] != (self.classes,):
            raise StructuralError(
                f"network output shape {shapes[-1]} != ({self.classes},)"
            )
        if not any(isinstance(l, (Dense, Conv)) for l in self.layers):
            raise StructuralError("network has no parameterized layer")

    def layer_shapes(self):
        """Shape after each layer, starting from input_shape."""
        shape = tuple(self.input_shape)
        out = [shape]
        for layer in self.layers:
            if isinstance(layer, Dense):
                if shape != (layer.in_dim,):
                    raise StructuralError(f"dense expects ({layer.in_dim},), got {shape}")
                shape = (layer.out_dim,)
            elif isinstance(layer, Conv):
                if len(shape) != 3 or shape[0] != layer.in_ch:
                    raise StructuralError(f"conv expects ({layer.in_ch},H,W), got {shape}")
                h, w = shape[1] - layer.k + 1, shape[2] - layer.k + 1
                if h < 1 or w < 1:
                    raise StructuralError("conv kernel larger than input")
                shape = (layer.out_ch, h, w)
            elif isinstance(layer, MaxPool):
                if len(shape) != 3 or shape[1] % layer.k or shape[2] % layer.k:
                    raise StructuralError(f"maxpool {layer.k} does not divide {shape}")
                shape = (shape[0], shape[1] // layer.k, shape[2] // layer.k)
            elif isinstance(layer, Activation):
                if layer.kind not in ("relu", "tanh"):
                    raise StructuralError(f"unknown activation {layer.kind!r}")
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            else:
                raise StructuralError(f"unknown layer {layer!r}")
            out.append(shape)
        return out


def lenet_like(classes=10, input_hw=28):
    """2 conv + 2 dense net in the LeNet mold for 1-channel images."""
    side = (input_hw - 4) // 2          # after conv5 + pool2
    side = (side - 4) // 2              # after second conv5 + pool2
    flat = 16 * side * side
    return NetworkSpec(
        layers=(
            Conv(1, 6, 5), Activation("relu"), MaxPool(2),
            Conv(6, 16, 5), Activation("relu"), MaxPool(2),
            Flatten(),
            Dense(flat, 64), Activation("relu"),
            Dense(64, classes),
        ),
        input_shape=(1, input_hw, input_hw),
        classes=classes,
    )


def mlp(dims, activation="relu"):
    """Dense net from a list of layer widths, e.g. [2, 16, 3]."""
    layers = []
    for i in range(len(dims) - 1):
        layers.append(Dense(dims[i], dims[i + 1]))
        if i < len(dims) - 2:
            layers.append(Activation(activation))
    return NetworkSpec(tuple(layers), (dims[0],), dims[-1])


# ---------------------------------------------------------------------------
# parameters


@dataclass
class ParamEntry:
    name: str
    shape: tuple
    values: np.ndarray  # flat float64

    def reshaped(self):
        return self.values.reshape(self.shape)


@dataclass
class ParamSet:
    entries: list

    def __post_init__(self):
        for e in self.entries:
            if e.values.ndim != 1 or e.values.size != int(np.prod(e.shape)):
                raise StructuralError(f"entry {e.name}: flat length != prod(shape)")
            if not np.all(np.isfinite(e.values)):
                raise InvalidInputError(f"entry {e.name} contains non-finite values")

    def names(self):
        return [e.name for e in self.entries]

    def get(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def copy(self):
        return ParamSet([ParamEntry(e.name, e.shape, e.values.copy()) for e in self.entries])

    def total_params(self):
        return sum(e.values.size for e in self.entries)

    def as_float32(self):
        """Round every value to float32 precision (kept in float64 storage)."""
        return ParamSet([
            ParamEntry(e.name, e.shape, e.values.astype(np.float32).astype(np.float64))
            for e in self.entries
        ])

    def pooled_values(self):
        return np.concatenate([e.values for e in self.entries])


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> ParamSet:
    """He-initialized weights, zero biases."""
    entries = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            w = rng.normal(0.0, np.sqrt(2.0 / layer.in_dim), (layer.in_dim, layer.out_dim))
            entries.append(ParamEntry(f"layer{i}.weight", w.shape, w.ravel()))
            entries.append(ParamEntry(f"layer{i}.bias", (layer.out_dim,), np.zeros(layer.out_dim)))
        elif isinstance(layer, Conv):
            fan_in = layer.in_ch * layer.k * layer.k
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (layer.out_ch, layer.in_ch, layer.k, layer.k))
            entries.append(ParamEntry(f"layer{i}.weight", w.shape, w.ravel()))
            entries.append(ParamEntry(f"layer{i}.bias", (layer.out_ch,), np.zeros(layer.out_ch)))
    return ParamSet(entries)


def zero_params(spec: NetworkSpec) -> ParamSet:
    ps = init_params(spec, np.random.default_rng(0))
    for e in ps.entries:
        e.values[:] = 0.0
    return ps


def param_layout(spec: NetworkSpec):
    """Expected (name, shape) pairs for a spec, in ParamSet order."""
    out = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            out.append((f"layer{i}.weight", (layer.in_dim, layer.out_dim)))
            out.append((f"layer{i}.bias", (layer.out_dim,)))
        elif isinstance(layer, Conv):
            out.append((f"layer{i}.weight", (layer.out_ch, layer.in_ch, layer.k, layer.k)))
            out.append((f"layer{i}.bias", (layer.out_ch,)))
    return out


def _check_compatible(spec: NetworkSpec, params: ParamSet):
    layout = param_layout(spec)
    if [(e.name, tuple(e.shape)) for e in params.entries] != layout:
        raise StructuralError("parameters do not match network spec layout")


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    features: np.ndarray  # (n, ...) float64, values in [0, 1]
    labels: np.ndarray    # (n,) int
    classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.features) == 0:
            raise InvalidInputError("dataset is empty")
        if len(self.features) != len(self.labels):
            raise StructuralError("feature/label count mismatch")
        if not np.all(np.isfinite(self.features)):
            raise InvalidInputError("non-finite feature values")
        if self.labels.min() < 0 or self.labels.max() >= self.classes:
            raise InvalidInputError("label outside [0, classes)")

    def __len__(self):
        return len(self.features)

    def subset(self, idx, split=None):
        return Dataset(self.features[idx], self.labels[idx], self.classes,
                       split or self.split)


def make_synthetic(kind, n, classes, seed, noise=0.06, dim=2):
    """Deterministic class-balanced toy dataset with features in [0, 1]."""
    if n < classes:
        raise ConfigRangeError("n must be >= classes")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes  # balanced within +-1
    if kind == "blobs":
        angles = 2.0 * np.pi * np.arange(classes) / classes
        centers = np.full((classes, dim), 0.5)
        centers[:, 0] += 0.3 * np.cos(angles)
        centers[:, 1 % dim] += 0.3 * np.sin(angles)
        feats = centers[labels] + rng.normal(0.0, noise, (n, dim))
    elif kind == "moons":
        if classes != 2:
            raise ConfigRangeError("moons requires classes=2")
        t = rng.uniform(0.0, np.pi, n)
        x = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
        y = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
        feats = np.stack([x, y], axis=1) * 0.35 + 0.4
        feats += rng.normal(0.0, noise, feats.shape)
    else:
        raise ConfigRangeError(f"unknown synthetic kind {kind!r}")
    feats = np.clip(feats, 0.0, 1.0)
    return Dataset(feats, labels, classes)


def split_dataset(ds, fractions, seed):
    """Shuffle and split into named parts, e.g. {'train': .6, 'val': .2, 'test': .2}."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(ds))
    out, start = {}, 0
    names = list(fractions)
    for i, name in enumerate(names):
        stop = len(ds) if i == len(names) - 1 else start + int(round(fractions[name] * len(ds)))
        out[name] = ds.subset(idx[start:stop], split=name)
        start = stop
    return out


# ---------------------------------------------------------------------------
# IDX files

IDX_LABEL_MAGIC = 0x00000801
IDX_IMAGE_MAGIC = 0x00000803


def load_idx(path):
    """Read one IDX file; returns images scaled to [0,1] or an int label array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise FormatError("file too short for magic", offset=len(data))
    magic = struct.unpack(">I", data[:4])[0]
    if magic == IDX_LABEL_MAGIC:
        ndim = 1
    elif magic == IDX_IMAGE_MAGIC:
        ndim = 3
    else:
        raise FormatError(f"bad IDX magic 0x{magic:08x}", offset=0)
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise FormatError("truncated dimension header", offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    count = int(np.prod(dims))
    if len(data) != header_len + count:
        raise FormatError(
            f"payload length {len(data) - header_len} != {count}", offset=len(data))
    payload = np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)
    if magic == IDX_LABEL_MAGIC:
        return payload.astype(np.int64)
    return payload.astype(np.float64) / 255.0


def load_idx_dataset(images_path, labels_path, classes=10, split="test"):
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3:
        raise FormatError(f"{images_path} is not an image file")
    if labels.ndim != 1:
        raise FormatError(f"{labels_path} is not a label file")
    if len(images) != len(labels):
        raise FormatError("image/label count mismatch")
    feats = images[:, None, :, :]  # single channel
    return Dataset(feats, labels, classes, split)


# ---------------------------------------------------------------------------
# forward / backward


def _pool_forward(x, k):
    n, c, h, w = x.shape
    xr = x.reshape(n, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
    xr = xr.reshape(n, c, h // k, w // k, k * k)
    idx = xr.argmax(-1)
    y = np.take_along_axis(xr, idx[..., None], -1)[..., 0]
    return y, (x.shape, idx)


def _pool_backward(dy, cache, k):
    shape, idx = cache
    n, c, h, w = shape
    dxr = np.zeros((n, c, h // k, w // k, k * k))
    np.put_along_axis(dxr, idx[..., None], dy[..., None], -1)
    dx = dxr.reshape(n, c, h // k, w // k, k, k).transpose(0, 1, 2, 4, 3, 5)
    return dx.reshape(shape)


def _conv_forward(x, w, b, k):
    n = x.shape[0]
    oc = w.shape[0]
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (n, ic, h2, w2, k, k)
    h2, w2 = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h2 * w2, -1)
    wmat = w.reshape(oc, -1)
    y = cols @ wmat.T + b
    y = y.transpose(0, 2, 1).reshape(n, oc, h2, w2)
    return y, (x.shape, cols, h2, w2)


def _conv_backward(dy, cache, w, k):
    xshape, cols, h2, w2 = cache
    n = dy.shape[0]
    oc = dy.shape[1]
    wmat = w.reshape(oc, -1)
    dy_mat = dy.reshape(n, oc, h2 * w2).transpose(0, 2, 1)  # (n, hw, oc)
    db = dy_mat.sum(axis=(0, 1))
    dwmat = np.einsum("npo,npc->oc", dy_mat, cols)
    dcols = dy_mat @ wmat  # (n, hw, ic*k*k)
    ic = xshape[1]
    d6 = dcols.reshape(n, h2, w2, ic, k, k).transpose(0, 3, 1, 2, 4, 5)
    dx = np.zeros(xshape)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + h2, j:j + w2] += d6[:, :, :, :, i, j]
    return dx, dwmat.reshape(w.shape), db


def _run_forward(spec, params, x, want_cache):
    caches = []
    pidx = 0
    out = x
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            w = params.entries[pidx].reshaped()
            b = params.entries[pidx + 1].values
            caches.append(out)
            out = out @ w + b
            pidx += 2
        elif isinstance(layer, Conv):
            w = params.entries[pidx].reshaped()
            b = params.entries[pidx + 1].values
            out, cache = _conv_forward(out, w, b, layer.k)
            caches.append(cache)
            pidx += 2
        elif isinstance(layer, MaxPool):
            out, cache = _pool_forward(out, layer.k)
            caches.append(cache)
        elif isinstance(layer, Activation):
            caches.append(out)
            out = np.maximum(out, 0.0) if layer.kind == "relu" else np.tanh(out)
            if layer.kind == "tanh":
                caches[-1] = out  # tanh gradient needs the output
        elif isinstance(layer, Flatten):
            caches.append(out.shape)
            out = out.reshape(out.shape[0], -1)
    return (out, caches) if want_cache else out


def forward(spec, params, features):
    """Logits for a batch of examples, one row per example."""
    _check_compatible(spec, params)
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1:] != tuple(spec.input_shape):
        raise StructuralError(f"batch shape {x.shape[1:]} != input {spec.input_shape}")
    return _run_forward(spec, params, x, want_cache=False)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_grads(spec, params, features, labels):
    """Cross-entropy loss, parameter gradients (flat, ParamSet order), input gradient."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    logits, caches = _run_forward(spec, params, x, want_cache=True)
    n = len(y)
    loss = cross_entropy(logits, y)
    probs = softmax(logits)
    probs[np.arange(n), y] -= 1.0
    d = probs / n
    grads = [None] * len(params.entries)
    pidx = sum(2 for l in spec.layers if isinstance(l, (Dense, Conv)))
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        cache = caches[i]
        if isinstance(layer, Dense):
            pidx -= 2
            w = params.entries[pidx].reshaped()
            grads[pidx] = (cache.T @ d).ravel()
            grads[pidx + 1] = d.sum(axis=0)
            d = d @ w.T
        elif isinstance(layer, Conv):
            pidx -= 2
            w = params.entries[pidx].reshaped()
            d, dw, db = _conv_backward(d, cache, w, layer.k)
            grads[pidx] = dw.ravel()
            grads[pidx + 1] = db
            # d already propagated by _conv_backward
        elif isinstance(layer, MaxPool):
            d = _pool_backward(d, cache, layer.k)
        elif isinstance(layer, Activation):
            if layer.kind == "relu":
                d = d * (cache > 0)  # subgradient 0 at the kink
            else:
                d = d * (1.0 - cache * cache)
        elif isinstance(layer, Flatten):
            d = d.reshape(cache)
    return loss, grads, d


def input_gradient(spec, params, features, labels):
    """Gradient of the cross-entropy loss w.r.t. the input features."""
    _check_compatible(spec, params)
    x = np.asarray(features, dtype=np.float64)
    single = x.shape == tuple(spec.input_shape)
    if single:
        x = x[None]
        labels = np.asarray([labels])
    _, _, dx = loss_and_grads(spec, params, x, labels)
    return dx[0] if single else dx


# ---------------------------------------------------------------------------
# training & evaluation


@dataclass
class TrainConfig:
    optimizer: str = "adam"        # sgd | adam
    learning_rate: float = 0.001
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigRangeError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ConfigRangeError("epochs must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigRangeError(f"unknown optimizer {self.optimizer!r}")


def train(spec, dataset, cfg: TrainConfig):
    """Train from scratch; returns (ParamSet, wall-clock seconds)."""
    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, rng)
    t0 = time.perf_counter()
    if cfg.optimizer == "adam":
        m = [np.zeros_like(e.values) for e in params.entries]
        v = [np.zeros_like(e.values) for e in params.entries]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
    n = len(dataset)
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, _ = loss_and_grads(
                spec, params, dataset.features[idx], dataset.labels[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss}")
            if cfg.optimizer == "sgd":
                for e, g in zip(params.entries, grads):
                    e.values -= cfg.learning_rate * g
            else:
                step += 1
                for j, (e, g) in enumerate(zip(params.entries, grads)):
                    m[j] = beta1 * m[j] + (1 - beta1) * g
                    v[j] = beta2 * v[j] + (1 - beta2) * g * g
                    mhat = m[j] / (1 - beta1 ** step)
                    vhat = v[j] / (1 - beta2 ** step)
                    e.values -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
    return params, time.perf_counter() - t0


def evaluate_accuracy(spec, params, dataset, batch=512):
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    correct = 0
    for start in range(0, len(dataset), batch):
        logits = forward(spec, params, dataset.features[start:start + batch])
        pred = logits.argmax(axis=1)  # argmax already breaks ties low
        correct += int((pred == dataset.labels[start:start + batch]).sum())
    return correct / len(dataset)
