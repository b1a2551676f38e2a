"""Dense tanh/ELU/tanh network with a softmax head, trained with Adam.

Hidden sizes default to 32, 128 and 64; everything is plain numpy in
float64 so gradients can be checked against finite differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

HIDDEN = (32, 128, 64)
N_CLASSES = 5
ACTIVATIONS = ("tanh", "elu", "tanh", "softmax")
_ACT_IDS = {"tanh": 1, "elu": 2, "softmax": 3, "linear": 4}
_ACT_NAMES = {v: k for k, v in _ACT_IDS.items()}

MAGIC = b"EMLP"
FILE_VERSION = 1


class NumericalError(ArithmeticError):
    pass


class ModelFormatError(ValueError):
    pass


def elu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class MLPModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...] = ACTIVATIONS
    elu_alpha: float = 1.0

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MLPModel":
        return MLPModel(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activations,
            self.elu_alpha,
        )

    def _act(self, name: str, z: np.ndarray) -> np.ndarray:
        if name == "tanh":
            return np.tanh(z)
        if name == "elu":
            return elu(z, self.elu_alpha)
        if name == "linear":
            return z
        raise ValueError(f"unknown activation {name!r}")

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input has {x.shape[-1]} features, model expects {self.input_dim}")
        return x

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = self._check(x)
        for w, b, act in zip(self.weights[:-1], self.biases[:-1], self.activations[:-1]):
            h = self._act(act, h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for a vector or a batch of rows."""
        return softmax(self.logits(x))

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean categorical cross-entropy and its gradient per parameter (params() order)."""
        x = self._check(np.atleast_2d(x))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        n = x.shape[0]
        pre, post = [], [x]
        h = x
        for w, b, act in zip(self.weights[:-1], self.biases[:-1], self.activations[:-1]):
            z = h @ w + b
            h = self._act(act, z)
            pre.append(z)
            post.append(h)
        z_out = h @ self.weights[-1] + self.biases[-1]
        loss = float(-np.sum(y * log_softmax(z_out)) / n)

        dz = (softmax(z_out) - y) / n
        grads_w, grads_b = [], []
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w.append(post[i].T @ dz)
            grads_b.append(dz.sum(axis=0))
            if i == 0:
                break
            dh = dz @ self.weights[i].T
            act, z = self.activations[i - 1], pre[i - 1]
            if act == "tanh":
                dz = dh * (1.0 - post[i] ** 2)
            elif act == "elu":
                dz = dh * elu_grad(z, self.elu_alpha)
            else:
                dz = dh
        grads = []
        for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
            grads += [gw, gb]
        return loss, grads


def init_model(
    input_dim: int,
    seed: int = 0,
    hidden: Sequence[int] = HIDDEN,
    n_classes: int = N_CLASSES,
    activations: Sequence[str] | None = None,
) -> MLPModel:
    """Glorot-uniform weights, zero biases."""
    if input_dim < 1:
        raise ValueError(f"input_dim must be positive, got {input_dim}")
    dims = (int(input_dim), *map(int, hidden), int(n_classes))
    if activations is None:
        if tuple(hidden) == HIDDEN:
            activations = ACTIVATIONS
        else:
            cycle = ("tanh", "elu")
            activations = tuple(cycle[i % 2] for i in range(len(hidden))) + ("softmax",)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPModel(dims, weights, biases, tuple(activations))


@dataclass
class Adam:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 50
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def optimizer(self) -> Adam:
        return Adam(self.lr, self.beta1, self.beta2, self.eps)


def train_step(model: MLPModel, x: np.ndarray, y: np.ndarray, opt: Adam) -> float:
    """One Adam step on the batch mean cross-entropy; returns the pre-update loss."""
    if len(x) == 0:
        raise ValueError("empty batch")
    loss, grads = model.loss_and_grads(x, y)
    if not math.isfinite(loss):
        norms = [float(np.linalg.norm(p)) for p in model.params()]
        raise NumericalError(f"non-finite loss {loss} at Adam step {opt.t + 1}; parameter norms {norms}")
    opt.step(model.params(), grads)
    return loss


def train(model: MLPModel, x: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig()) -> list[float]:
    """Minibatch training in place; returns the mean loss of each epoch."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    opt = cfg.optimizer()
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            total += train_step(model, x[idx], y[idx], opt) * len(idx)
        history.append(total / n)
    return history


def one_hot(labels: Sequence[int], n_classes: int = N_CLASSES) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), np.asarray(labels, dtype=int)] = 1.0
    return out


# -- persistence: magic, version, dims, activation ids, little-endian float64 --

def save_model(model: MLPModel, path: str | Path) -> None:
    dims = model.layer_dims
    header = MAGIC + struct.pack("<II", FILE_VERSION, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    header += struct.pack(f"<{len(model.activations)}B", *(_ACT_IDS[a] for a in model.activations))
    header += struct.pack("<d", model.elu_alpha)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params())
    Path(path).write_bytes(header + body)


def load_model(path: str | Path) -> MLPModel:
    data = Path(path).read_bytes()
    try:
        if data[:4] != MAGIC:
            raise ModelFormatError(f"{path}: bad magic bytes")
        version, n_dims = struct.unpack_from("<II", data, 4)
        if version != FILE_VERSION:
            raise ModelFormatError(f"{path}: file version {version}, expected {FILE_VERSION}")
        off = 12
        dims = struct.unpack_from(f"<{n_dims}I", data, off)
        off += 4 * n_dims
        acts = tuple(_ACT_NAMES[i] for i in struct.unpack_from(f"<{n_dims - 1}B", data, off))
        off += n_dims - 1
        (alpha,) = struct.unpack_from("<d", data, off)
        off += 8
    except (struct.error, KeyError) as e:
        raise ModelFormatError(f"{path}: corrupt header ({e})") from None
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            size = int(np.prod(shape)) * 8
            if off + size > len(data):
                raise ModelFormatError(f"{path}: truncated parameter data")
            arr = np.frombuffer(data, dtype="<f8", count=size // 8, offset=off).reshape(shape).astype(np.float64)
            (weights if len(shape) == 2 else biases).append(arr)
            off += size
    if off != len(data):
        raise ModelFormatError(f"{path}: {len(data) - off} trailing bytes")
    return MLPModel(tuple(dims), weights, biases, acts, alpha)
