"""Fully-connected ReLU network trained with Adam, in plain numpy.

The network serves both as a binary classifier (sigmoid head, binary
cross-entropy) and as an HbA1c regressor (identity head, mean squared error).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np


class NetError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 0.01
    lr_step: int = 25
    lr_gamma: float = 0.5
    batch_size: int = 128
    dropout: float = 0.0
    hidden: tuple[int, ...] = (64, 32)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    standardize_target: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise NetError("epochs must be >= 1")
        if not 0 < self.lr_gamma <= 1:
            raise NetError("lr_gamma must lie in (0, 1]")
        if self.batch_size < 1:
            raise NetError("batch_size must be >= 1")
        if not 0 <= self.dropout < 1:
            raise NetError("dropout must lie in [0, 1)")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def learning_rate_at(config: TrainConfig, epoch: int) -> float:
    """Step decay: rate for 0-based ``epoch``."""
    return config.learning_rate * config.lr_gamma ** (epoch // config.lr_step)


@dataclass
class MlpModel:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "sigmoid"  # "sigmoid" | "identity"
    dropout: float = 0.0
    y_offset: float = 0.0
    y_scale: float = 1.0

    def __post_init__(self):
        if self.head not in ("sigmoid", "identity"):
            raise NetError(f"unknown head {self.head!r}")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise NetError(f"layer {i} shape mismatch")

    @property
    def objective(self) -> str:
        return "logistic" if self.head == "sigmoid" else "squared"

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, X, rng: np.random.Generator | None = None):
        """Output logits/values plus the cache backprop needs.

        Dropout is applied only when ``rng`` is given (training mode).
        """
        a = X
        cache = []
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            if i == last:
                cache.append((a, z, None))
                return z[:, 0], cache
            h = np.maximum(z, 0.0)
            mask = None
            if rng is not None and self.dropout > 0:
                keep = 1.0 - self.dropout
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
            cache.append((a, z, mask))
            a = h
        raise NetError("network has no layers")

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise NetError(f"expected {self.sizes[0]} inputs, got {X.shape[1]}")
        out, _ = self.forward(X)
        if self.head == "sigmoid":
            return _sigmoid(out)
        return out * self.y_scale + self.y_offset

    def to_json(self) -> str:
        return json.dumps(
            {
                "sizes": list(self.sizes),
                "head": self.head,
                "dropout": self.dropout,
                "y_offset": self.y_offset,
                "y_scale": self.y_scale,
                "weights": [W.ravel().tolist() for W in self.weights],
                "biases": [b.tolist() for b in self.biases],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        d = json.loads(text)
        sizes = tuple(d["sizes"])
        weights = [np.array(w, dtype=float).reshape(sizes[i], sizes[i + 1]) for i, w in enumerate(d["weights"])]
        biases = [np.array(b, dtype=float) for b in d["biases"]]
        return cls(sizes, weights, biases, d["head"], d["dropout"], d["y_offset"], d["y_scale"])


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def init_mlp(sizes, head: str, rng: np.random.Generator, dropout: float = 0.0) -> MlpModel:
    """He-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(sizes), weights, biases, head, dropout)


def loss_and_grad(model: MlpModel, X, y, rng: np.random.Generator | None = None):
    """Mean loss over the batch and its gradient w.r.t. ``model.params()``.

    ``y`` is in the network's own output units (already standardized for
    the identity head).
    """
    out, cache = model.forward(X, rng)
    n = X.shape[0]
    if model.head == "sigmoid":
        L = float(np.mean(np.logaddexp(0.0, out) - y * out))
        dout = (_sigmoid(out) - y) / n
    else:
        r = out - y
        L = float(np.mean(r * r))
        dout = 2.0 * r / n
    grads: list[np.ndarray] = []
    delta = dout[:, None]
    for i in range(len(model.weights) - 1, -1, -1):
        a, z, _ = cache[i]
        gW = a.T @ delta
        gb = delta.sum(axis=0)
        grads[:0] = [gW, gb]
        if i > 0:
            _, z_prev, mask_prev = cache[i - 1]
            delta = delta @ model.weights[i].T
            if mask_prev is not None:
                delta = delta * mask_prev
            delta = delta * (z_prev > 0)
    return L, grads


def train_mlp(X, y, config: TrainConfig = TrainConfig(), objective: str = "logistic",
              log: list | None = None) -> MlpModel:
    """Adam with step learning-rate decay; every random draw comes from ``config.seed``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or y.shape != (X.shape[0],):
        raise NetError("need a non-empty design matrix and a matching target vector")
    if objective == "logistic":
        if not np.all((y == 0) | (y == 1)):
            raise NetError("logistic objective needs 0/1 targets")
        head = "sigmoid"
    elif objective == "squared":
        head = "identity"
    else:
        raise NetError(f"unknown objective {objective!r}")

    rng = np.random.default_rng(config.seed)
    model = init_mlp((X.shape[1], *config.hidden, 1), head, rng, config.dropout)
    target = y
    if head == "identity" and config.standardize_target:
        sd = float(y.std())
        model.y_offset = float(y.mean())
        model.y_scale = sd if sd > 0 else 1.0
        target = (y - model.y_offset) / model.y_scale

    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0
    n = X.shape[0]
    for epoch in range(config.epochs):
        lr = learning_rate_at(config, epoch)
        perm = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught just below
                L, grads = loss_and_grad(model, X[idx], target[idx], rng)
            if not math.isfinite(L):
                raise NetError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += L * idx.size
            t += 1
            c1 = 1.0 - config.beta1 ** t
            c2 = 1.0 - config.beta2 ** t
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= config.beta1
                mi += (1.0 - config.beta1) * g
                vi *= config.beta2
                vi += (1.0 - config.beta2) * g * g
                p -= lr * (mi / c1) / (np.sqrt(vi / c2) + config.eps)
        if log is not None:
            log.append({"epoch": epoch, "lr": lr, "loss": total / n})
    return model


def predict_mlp(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return model.predict(X[None, :])[0]
    return model.predict(X)


def min_abs_preactivation(model: MlpModel, x) -> float:
    """Smallest |pre-activation| over hidden units for input ``x``; inf without hidden layers."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    smallest = math.inf
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ W + b
        smallest = min(smallest, float(np.abs(z).min()))
        a = np.maximum(z, 0.0)
    return smallest


def gradient_check(model: MlpModel, x, y: float, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over every parameter."""
    if model.dropout:
        model = MlpModel(model.sizes, model.weights, model.biases, model.head, 0.0,
                         model.y_offset, model.y_scale)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_1d(np.asarray(y, dtype=float))
    _, grads = loss_and_grad(model, X, Y)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss_and_grad(model, X, Y)
            flat[i] = orig - h
            down, _ = loss_and_grad(model, X, Y)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric) + abs(gflat[i]), 1e-6)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


def params_equal(a: MlpModel, b: MlpModel) -> bool:
    return a.sizes == b.sizes and all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.hidden)
    return d
