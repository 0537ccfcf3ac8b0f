"""Toy dense ReLU network with manual backprop and normalized SGD training.

Layers compute ``z = W a + b`` with ``W`` of shape ``(out, in)``; inputs are
batched as rows. In ``sn`` and ``srn`` modes every step replaces each ``W``
by its normalized version before the forward pass and pulls the gradient
back through the normalization onto the raw ``W``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, MalformedCsv
from .linalg import spectral_norm
from .normalize import layer_step, layer_step_backward

ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"


class MlpModel:
    """Sequence of affine layers; the last one must be linear (logits)."""

    def __init__(self, layers: list[Layer], u_states: list[np.ndarray] | None = None):
        if not layers:
            raise ValueError("model needs at least one layer")
        for i, layer in enumerate(layers):
            layer.W = np.asarray(layer.W, dtype=np.float64)
            layer.b = np.asarray(layer.b, dtype=np.float64).reshape(-1)
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.b.shape[0] != layer.W.shape[0]:
                raise DimensionMismatch(f"layer {i}: bias length {layer.b.shape[0]} != rows {layer.W.shape[0]}")
            if i and layer.W.shape[1] != layers[i - 1].W.shape[0]:
                raise DimensionMismatch(
                    f"layer {i} expects {layer.W.shape[1]} inputs, previous layer gives {layers[i - 1].W.shape[0]}"
                )
        if layers[-1].activation != "identity":
            raise ValueError("final layer must use the identity activation")
        self.layers = layers
        self.u_states = u_states if u_states is not None else [None] * len(layers)

    @classmethod
    def init(cls, sizes: list[int], seed: int = 0) -> "MlpModel":
        """He-initialized ReLU network with layer widths ``sizes`` (input first)."""
        rng = np.random.default_rng(seed)
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            W = rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)
            act = "identity" if i == len(sizes) - 2 else "relu"
            layers.append(Layer(W, np.zeros(n_out), act))
        model = cls(layers)
        for i, layer in enumerate(layers):
            u = rng.standard_normal(layer.W.shape[0])
            model.u_states[i] = u / np.linalg.norm(u)
        return model

    @property
    def weights(self) -> list[np.ndarray]:
        return [layer.W for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    def copy(self) -> "MlpModel":
        layers = [Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers]
        return MlpModel(layers, [None if u is None else u.copy() for u in self.u_states])

    def with_weights(self, weights: list[np.ndarray]) -> "MlpModel":
        layers = [Layer(np.array(W, dtype=np.float64), l.b.copy(), l.activation) for W, l in zip(weights, self.layers)]
        return MlpModel(layers)

    def __call__(self, X) -> np.ndarray:
        return forward(self, X)[0]

    def jacobian(self, x) -> np.ndarray:
        """``d logits / d x`` at a single input."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        _, cache = forward(self, x)
        J = np.eye(self.input_dim)
        for layer, z in zip(self.layers, cache["pre"]):
            J = layer.W @ J
            if layer.activation == "relu":
                J = J * (z[0] > 0)[:, None]
        return J


def _relu(z):
    return np.maximum(z, 0.0)


def forward(model: MlpModel, X, weights: list[np.ndarray] | None = None):
    """Logits plus a cache with per-layer inputs (``"inputs"``) and pre-activations (``"pre"``).

    A 1-D ``X`` is treated as a single example and yields 1-D logits.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    A = X[None, :] if single else X
    if A.ndim != 2 or A.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected inputs of dimension {model.input_dim}, got shape {X.shape}")
    weights = model.weights if weights is None else weights
    inputs, pre = [], []
    for layer, W in zip(model.layers, weights):
        inputs.append(A)
        Z = A @ W.T + layer.b
        pre.append(Z)
        A = _relu(Z) if layer.activation == "relu" else Z
    cache = {"inputs": inputs, "pre": pre, "weights": weights}
    return (A[0] if single else A), cache


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, y) -> float:
    logits = np.atleast_2d(logits)
    y = np.atleast_1d(np.asarray(y))
    Z = logits - logits.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def backward(model: MlpModel, cache: dict, y) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients ``(dW, db)`` per layer of the mean cross-entropy over the batch."""
    y = np.atleast_1d(np.asarray(y))
    logits = cache["pre"][-1]
    n = logits.shape[0]
    if y.shape[0] != n:
        raise DimensionMismatch(f"{y.shape[0]} labels for a batch of {n}")
    delta = softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        grads[i] = (delta.T @ cache["inputs"][i], delta.sum(axis=0))
        if i:
            delta = (delta @ cache["weights"][i]) * (cache["pre"][i - 1] > 0)
    return grads


def loss_and_grads(model: MlpModel, X, y, weights=None):
    logits, cache = forward(model, np.atleast_2d(X), weights)
    return cross_entropy(logits, y), backward(model, cache, y)


def accuracy(model: MlpModel, X, y, weights=None) -> float:
    logits, _ = forward(model, np.atleast_2d(X), weights)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))


# ---------------------------------------------------------------- datasets


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return self.labels.shape[0]


def make_blobs(n: int, d: int, n_classes: int, spread: float, seed: int = 0) -> Dataset:
    """Gaussian blobs around standard-normal class centres; balanced labels."""
    if min(n, d, n_classes) < 1:
        raise ValueError("n, d and n_classes must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, d))
    labels = rng.permutation(np.arange(n) % n_classes)
    X = centers[labels] + spread * rng.standard_normal((n, d))
    return Dataset(X, labels, n_classes)


def randomize_labels(ds: Dataset, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    return Dataset(ds.inputs.copy(), rng.integers(0, ds.n_classes, len(ds)), ds.n_classes)


def split(ds: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(ds))
    n_test = int(round(test_fraction * len(ds)))
    te, tr = idx[:n_test], idx[n_test:]
    return (
        Dataset(ds.inputs[tr], ds.labels[tr], ds.n_classes),
        Dataset(ds.inputs[te], ds.labels[te], ds.n_classes),
    )


def save_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for x, y in zip(ds.inputs, ds.labels):
            fh.write(",".join(f"{v:.17g}" for v in x) + f",{int(y)}\n")


def load_csv(path, n_classes: int | None = None) -> Dataset:
    """Read rows ``f1,...,fd,label`` (no header).

    Raises ``MalformedCsv`` carrying the 1-based line number of the first bad row.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    rows, labels = [], []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row:
            raise MalformedCsv("empty line", lineno)
        if len(row) < 2:
            raise MalformedCsv("need at least one feature and a label", lineno)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise MalformedCsv(f"expected {width} fields, got {len(row)}", lineno)
        try:
            feats = [float(v) for v in row[:-1]]
        except ValueError:
            raise MalformedCsv("non-numeric feature", lineno) from None
        if not all(np.isfinite(feats)):
            raise MalformedCsv("non-finite feature", lineno)
        try:
            label = int(row[-1])
        except ValueError:
            raise MalformedCsv(f"label {row[-1]!r} is not an integer", lineno) from None
        if label < 0:
            raise MalformedCsv("negative label", lineno)
        rows.append(feats)
        labels.append(label)
    if not rows:
        raise MalformedCsv("no data rows", 1)
    return Dataset(np.array(rows), np.array(labels), n_classes or max(labels) + 1)


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    mode: Literal["vanilla", "sn", "srn"] = "vanilla"
    c: float | None = None
    lr: float = 0.05
    weight_decay: float = 0.0
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    label_randomization: bool = False
    stop_train_acc: float | None = None
    # None runs one power sweep per step; a tolerance sweeps to convergence instead
    power_tol: float | None = None

    def __post_init__(self):
        if self.mode not in ("vanilla", "sn", "srn"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if (self.c is not None) != (self.mode == "srn"):
            raise ValueError("c is required for srn mode and only allowed there")
        if self.c is not None and not 0.0 < self.c <= 1.0:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")
        if self.lr <= 0 or self.weight_decay < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid optimizer settings")
        if self.power_tol is not None and self.power_tol <= 0:
            raise ValueError(f"power_tol must be positive, got {self.power_tol}")


def layer_target(shape: tuple[int, int], c: float) -> float:
    """``c * min(m, n)``, floored at 1 (a stable rank below 1 does not exist)."""
    return max(1.0, c * min(shape))


@dataclass
class TraceRow:
    epoch: int
    train_acc: float
    test_acc: float
    layer_idx: int
    srank: float
    sigma1: float


@dataclass
class TrainTrace:
    rows: list[TraceRow] = field(default_factory=list)

    @property
    def final_train_acc(self) -> float:
        return self.rows[-1].train_acc if self.rows else float("nan")

    @property
    def final_test_acc(self) -> float:
        return self.rows[-1].test_acc if self.rows else float("nan")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,train_acc,test_acc,layer_idx,srank,sigma1\n")
            for r in self.rows:
                fh.write(
                    f"{r.epoch},{r.train_acc:.17g},{r.test_acc:.17g},{r.layer_idx},{r.srank:.17g},{r.sigma1:.17g}\n"
                )


def _normalize_layers(model: MlpModel, cfg: TrainConfig, update_state: bool):
    if cfg.mode == "vanilla":
        return model.weights, None
    effective, steps = [], []
    for i, layer in enumerate(model.layers):
        r = layer_target(layer.W.shape, cfg.c) if cfg.mode == "srn" else 1.0
        step = layer_step(layer.W, r, model.u_states[i], spectral_only=cfg.mode == "sn", power_tol=cfg.power_tol)
        if update_state:
            model.u_states[i] = step.u
        effective.append(step.w_f)
        steps.append(step)
    return effective, steps


def effective_weights(model: MlpModel, cfg: TrainConfig) -> list[np.ndarray]:
    """Weights the network actually computes with under ``cfg``; power-iteration state untouched."""
    return _normalize_layers(model, cfg, update_state=False)[0]


def normalized_model(model: MlpModel, cfg: TrainConfig) -> MlpModel:
    """Plain model carrying the effective (normalized) weights."""
    return model.with_weights(effective_weights(model, cfg))


def train(model: MlpModel, dataset: Dataset, cfg: TrainConfig, test: Dataset | None = None) -> TrainTrace:
    """Mini-batch SGD on mean cross-entropy; mutates ``model`` in place.

    Records, after every epoch and for every layer, the train/test accuracy
    and the stable rank and spectral norm of the effective weights.
    """
    if dataset.inputs.shape[1] != model.input_dim:
        raise DimensionMismatch(f"data has {dataset.inputs.shape[1]} features, model expects {model.input_dim}")
    if cfg.label_randomization:
        dataset = randomize_labels(dataset, cfg.seed)
    for i, layer in enumerate(model.layers):
        if model.u_states[i] is None:
            u = np.random.default_rng([cfg.seed, i]).standard_normal(layer.W.shape[0])
            model.u_states[i] = u / np.linalg.norm(u)
    order_rng = np.random.default_rng([cfg.seed, 7919])
    trace = TrainTrace()
    n = len(dataset)
    for epoch in range(1, cfg.epochs + 1):
        perm = order_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            effective, steps = _normalize_layers(model, cfg, update_state=True)
            _, grads = loss_and_grads(model, dataset.inputs[idx], dataset.labels[idx], effective)
            for i, (layer, (gW, gb)) in enumerate(zip(model.layers, grads)):
                if steps is not None:
                    gW = layer_step_backward(steps[i], layer.W, gW)
                if cfg.weight_decay:
                    gW = gW + cfg.weight_decay * layer.W
                layer.W -= cfg.lr * gW
                layer.b -= cfg.lr * gb
        effective = effective_weights(model, cfg)
        train_acc = accuracy(model, dataset.inputs, dataset.labels, effective)
        test_acc = accuracy(model, test.inputs, test.labels, effective) if test is not None else float("nan")
        for i, W in enumerate(effective):
            sigma1 = spectral_norm(W, max_iter=100_000, seed=cfg.seed)
            trace.rows.append(TraceRow(epoch, train_acc, test_acc, i, float(np.sum(W * W) / sigma1**2), sigma1))
        if cfg.stop_train_acc is not None and train_acc >= cfg.stop_train_acc:
            break
    return trace
