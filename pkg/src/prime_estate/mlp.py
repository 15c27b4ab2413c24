"""Fully connected ReLU regressor trained with Adam on shuffled mini-batches."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, NonFiniteLoss

ARCHITECTURES = ((1024,), (256, 128), (128, 64, 32))


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: tuple[int, ...] = (256, 128)
    learning_rate: float = 1e-3
    batch_size: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    l2_alpha: float = 1e-4
    max_epochs: int = 200
    patience: int = 10
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if any(w < 1 for w in self.hidden_layers):
            raise ValueError("layer widths must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


# Best architecture reported on the reference data.
BEST_MLP = MlpConfig(hidden_layers=(256, 128))


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def init_model(n_features: int, hidden_layers, rng: np.random.Generator) -> MlpModel:
    """Glorot-uniform weights and biases, bound sqrt(6 / (fan_in + fan_out))."""
    sizes = [n_features, *hidden_layers, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return MlpModel(weights, biases)


def _forward(model: MlpModel, X: np.ndarray) -> list[np.ndarray]:
    activations = [X]
    h = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
        activations.append(h)
    return activations


def loss(model: MlpModel, X: np.ndarray, y: np.ndarray, l2_alpha: float) -> float:
    """Half mean squared error plus alpha * ||W||^2 / (2 n)."""
    n = X.shape[0]
    out = _forward(model, X)[-1][:, 0]
    penalty = sum(float(np.sum(W * W)) for W in model.weights)
    return float(np.mean((out - y) ** 2) / 2 + l2_alpha * penalty / (2 * n))


def loss_gradient(model: MlpModel, X: np.ndarray, y: np.ndarray, l2_alpha: float):
    """Loss and its gradients with respect to every weight matrix and bias vector."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    acts = _forward(model, X)
    out = acts[-1][:, 0]
    penalty = sum(float(np.sum(W * W)) for W in model.weights)
    value = float(np.mean((out - y) ** 2) / 2 + l2_alpha * penalty / (2 * n))

    delta = ((out - y) / n)[:, None]
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta + (l2_alpha / n) * model.weights[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return value, grad_w, grad_b


def fit(X, y, cfg: MlpConfig = MlpConfig()) -> MlpModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n == 0:
        raise EmptyTrainingSet("MLP needs at least one training row")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model = init_model(d, cfg.hidden_layers, rng)
    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    batch = min(cfg.batch_size, n)
    best = np.inf
    stale = 0

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            value, gw, gb = loss_gradient(model, X[rows], y[rows], cfg.l2_alpha)
            epoch_loss += value * rows.size
            step += 1
            lr = cfg.learning_rate * np.sqrt(1 - cfg.beta2**step) / (1 - cfg.beta1**step)
            for p, g, mi, vi in zip(params, gw + gb, m, v):
                mi *= cfg.beta1
                mi += (1 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1 - cfg.beta2) * g * g
                p -= lr * mi / (np.sqrt(vi) + cfg.adam_eps)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(epoch, epoch_loss)
        model.loss_history.append(epoch_loss)
        if epoch_loss > best - cfg.tol:
            stale += 1
        else:
            stale = 0
        best = min(best, epoch_loss)
        if stale >= cfg.patience:
            break
    return model


def predict(model: MlpModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(model.n_features, X.shape[1])
    return _forward(model, X)[-1][:, 0]
