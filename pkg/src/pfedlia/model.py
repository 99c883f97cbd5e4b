"""Small differentiable classifiers over flat parameter vectors.

Two model kinds are supported: multinomial softmax regression and a
one-hidden-layer tanh MLP. Parameters always travel as a flat float64
vector so clients and the server can average them without knowing the
layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Examples

SOFTMAX = "softmax-regression"
MLP = "mlp"
MODEL_KINDS = (SOFTMAX, MLP)

INIT_SCALE = 0.05


class TrainingDivergence(RuntimeError):
    """Raised when local training produces a non-finite loss."""

    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class ModelSpec:
    kind: str = SOFTMAX
    input_dim: int = 2
    num_classes: int = 2
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.kind == MLP and self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1 for an mlp")

    @property
    def num_params(self) -> int:
        d, c, h = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind == SOFTMAX:
            return d * c + c
        return d * h + h + h * c + c


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    learning_rate: float = 0.1
    batch_size: int = 32
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _unpack(spec: ModelSpec, theta: np.ndarray):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size != spec.num_params:
        raise ValueError(
            f"parameter vector has length {theta.size}, expected {spec.num_params}"
        )
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    if spec.kind == SOFTMAX:
        return theta[: d * c].reshape(d, c), theta[d * c :]
    o = 0
    w1 = theta[o : o + d * h].reshape(d, h)
    o += d * h
    b1 = theta[o : o + h]
    o += h
    w2 = theta[o : o + h * c].reshape(h, c)
    o += h * c
    return w1, b1, w2, theta[o:]


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Weights uniform in [-0.05, 0.05], biases zero."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.num_params)
    parts = _unpack(spec, theta)
    # views into theta; odd positions are biases
    for w in parts[0::2]:
        w[...] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=w.shape)
    return theta


def _check(spec: ModelSpec, data: Examples):
    if len(data) == 0:
        raise ValueError("empty batch")
    if data.X.shape[1] != spec.input_dim:
        raise ValueError(
            f"features have dimension {data.X.shape[1]}, model expects {spec.input_dim}"
        )
    if data.y.min() < 0 or data.y.max() >= spec.num_classes:
        raise ValueError("label out of range for model")


def logits(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    parts = _unpack(spec, theta)
    if spec.kind == SOFTMAX:
        w, b = parts
        return X @ w + b
    w1, b1, w2, b2 = parts
    return np.tanh(X @ w1 + b1) @ w2 + b2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def probabilities(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits(spec, theta, X)))


def forward_loss(spec: ModelSpec, theta: np.ndarray, data: Examples) -> float:
    """Mean cross-entropy over ``data``."""
    _check(spec, data)
    logp = _log_softmax(logits(spec, theta, data.X))
    return float(-logp[np.arange(len(data)), data.y].mean())


def loss_and_gradient(
    spec: ModelSpec, theta: np.ndarray, data: Examples
) -> tuple[float, np.ndarray]:
    _check(spec, data)
    X, y = data.X, data.y
    n = len(data)
    parts = _unpack(spec, theta)
    if spec.kind == SOFTMAX:
        w, b = parts
        z = X @ w + b
    else:
        w1, b1, w2, b2 = parts
        hidden = np.tanh(X @ w1 + b1)
        z = hidden @ w2 + b2
    logp = _log_softmax(z)
    rows = np.arange(n)
    loss = float(-logp[rows, y].mean())

    dz = np.exp(logp)
    dz[rows, y] -= 1.0
    dz /= n

    if spec.kind == SOFTMAX:
        grad = np.concatenate([(X.T @ dz).ravel(), dz.sum(axis=0)])
    else:
        dhidden = (dz @ w2.T) * (1.0 - hidden**2)
        grad = np.concatenate(
            [
                (X.T @ dhidden).ravel(),
                dhidden.sum(axis=0),
                (hidden.T @ dz).ravel(),
                dz.sum(axis=0),
            ]
        )
    return loss, grad


def gradient(spec: ModelSpec, theta: np.ndarray, data: Examples) -> np.ndarray:
    return loss_and_gradient(spec, theta, data)[1]


def local_train(
    spec: ModelSpec, theta0: np.ndarray, data: Examples, cfg: TrainConfig
) -> np.ndarray:
    """Mini-batch SGD for ``cfg.epochs`` epochs starting from ``theta0``.

    A batch size at or above the dataset size means full-batch gradient
    descent, in which case the data is not shuffled.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    theta = np.array(theta0, dtype=np.float64, copy=True)
    n = len(data)
    batch = min(cfg.batch_size, n)
    rng = np.random.default_rng(cfg.shuffle_seed)
    # overflow is detected below and reported as TrainingDivergence
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            if batch == n:
                batches = [data]
            else:
                order = rng.permutation(n)
                batches = [data.subset(order[s : s + batch]) for s in range(0, n, batch)]
            for mb in batches:
                loss, g = loss_and_gradient(spec, theta, mb)
                if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                    raise TrainingDivergence(epoch)
                theta -= cfg.learning_rate * g
    if not np.all(np.isfinite(theta)):
        raise TrainingDivergence(cfg.epochs, "non-finite parameters")
    return theta


def predict(spec: ModelSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(logits(spec, theta, X), axis=1)


def evaluate(spec: ModelSpec, theta: np.ndarray, data: Examples) -> tuple[float, float]:
    """Return ``(mean loss, accuracy)`` on ``data``."""
    loss = forward_loss(spec, theta, data)
    acc = float(np.mean(predict(spec, theta, data.X) == data.y))
    return loss, acc
