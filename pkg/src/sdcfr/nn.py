"""Small fully-connected regressor with masked, iteration-weighted training.

The network is a plain ReLU MLP with a linear head, one output per action
of the game's maximal action set. Training minimizes

    mean over batch of  (t / T) * w * sum_{legal a} (f(x)_a - y_a)^2

with Adam and global gradient-norm clipping, where ``t`` is the iteration
the sample was produced on, ``T`` the current iteration and ``w`` an extra
per-sample weight (1 for sampled data).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sampling import EmptyBuffer

CHECKPOINT_MAGIC = b"SDCN"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = (64, 64, 64)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if min((self.input_dim, self.output_dim) + self.hidden_dims) < 1:
            raise ValueError("all layer sizes must be >= 1")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + self.hidden_dims + (self.output_dim,)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 2048
    n_updates: int = 750
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.batch_size <= 0 or self.n_updates <= 0 or self.lr <= 0 or self.clip_norm <= 0:
            raise ValueError("training sizes and rates must be positive")


@dataclass
class NetParams:
    """Weights ``W[k]`` of shape (fan_in, fan_out) and biases ``b[k]``; ``y = x @ W + b``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "NetParams":
        return NetParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "NetParams":
        return NetParams([w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases])

    def flat(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_params(config: NetConfig, rng: np.random.Generator, dtype=np.float32) -> NetParams:
    """He-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(config.dims[:-1], config.dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return NetParams(weights, biases)


def forward(params: NetParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ShapeMismatch(f"expected {params.weights[0].shape[0]} features, got {x.shape[-1]}")
    h = x.astype(params.weights[0].dtype, copy=False)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            np.maximum(h, 0, out=h)
    return h


def loss_and_grads(params: NetParams, x, y, mask, sample_weight) -> tuple[float, NetParams]:
    """Weighted masked squared error (batch mean) and its parameter gradients."""
    acts = [x.astype(params.weights[0].dtype, copy=False)]
    last = len(params.weights) - 1
    h = acts[0]
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            h = np.maximum(h, 0)
        acts.append(h)
    n = x.shape[0]
    diff = (h - y) * mask
    sw = sample_weight.astype(h.dtype, copy=False)[:, None]
    loss = float((sw * diff * diff).sum() / n)
    g = (2.0 / n) * sw * diff
    gw: list[np.ndarray] = [None] * len(params.weights)
    gb: list[np.ndarray] = [None] * len(params.weights)
    for k in range(last, -1, -1):
        gw[k] = acts[k].T @ g
        gb[k] = g.sum(axis=0)
        if k > 0:
            g = (g @ params.weights[k].T) * (acts[k] > 0)
    return loss, NetParams(gw, gb)


class Adam:
    def __init__(self, params: NetParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params.flat()]
        self.v = [np.zeros_like(p) for p in params.flat()]
        self.step_count = 0

    def step(self, params: NetParams, grads: NetParams) -> None:
        cfg = self.cfg
        self.step_count += 1
        bc1 = 1.0 - cfg.beta1**self.step_count
        bc2 = 1.0 - cfg.beta2**self.step_count
        flat_g = grads.flat()
        norm = np.sqrt(sum(float((g * g).sum()) for g in flat_g))
        scale = min(1.0, cfg.clip_norm / norm) if norm > 0 else 1.0
        for p, g, m, v in zip(params.flat(), flat_g, self.m, self.v):
            if scale != 1.0:
                g = g * scale
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            p -= (cfg.lr / bc1) * m / (np.sqrt(v / bc2) + cfg.eps)


def train(
    params: NetParams,
    buffer,
    train_config: TrainConfig,
    current_iteration: int,
    rng: np.random.Generator,
) -> tuple[NetParams, float]:
    """Fit ``params`` (copied, not mutated) to a sample buffer.

    ``buffer.arrays()`` must return (features, targets, masks, iterations,
    weights). Mini-batches are drawn uniformly with replacement. Returns the
    trained params and the last mini-batch loss.
    """
    x, y, mask, its, w = buffer.arrays()
    n = x.shape[0]
    if n == 0:
        raise EmptyBuffer("cannot train on an empty buffer")
    out = params.copy()
    opt = Adam(out, train_config)
    sample_weight = (its / float(current_iteration)) * w
    loss = 0.0
    for _ in range(train_config.n_updates):
        idx = rng.integers(0, n, size=train_config.batch_size)
        loss, grads = loss_and_grads(out, x[idx], y[idx], mask[idx], sample_weight[idx])
        opt.step(out, grads)
    return out, loss


# -- checkpoints -------------------------------------------------------------

_HEAD = struct.Struct("<4sIBII")


def checkpoint_bytes(params: NetParams, player: int, iteration: int) -> bytes:
    """Serialize: magic, u32 version, u8 player, u32 iteration, u32 layers,
    per-layer u32 rows/cols, then per layer float32 weights (row-major) and biases."""
    parts = [_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, player, iteration, len(params.weights))]
    parts += [struct.pack("<II", *w.shape) for w in params.weights]
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def load_checkpoint(data: bytes) -> tuple[NetParams, dict]:
    if len(data) < _HEAD.size:
        raise TruncatedFile("checkpoint header truncated")
    magic, version, player, iteration, n_layers = _HEAD.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    pos = _HEAD.size
    if len(data) < pos + 8 * n_layers:
        raise TruncatedFile("layer table truncated")
    shapes = [struct.unpack_from("<II", data, pos + 8 * k) for k in range(n_layers)]
    pos += 8 * n_layers
    need = pos + 4 * sum(r * c + c for r, c in shapes)
    if len(data) < need:
        raise TruncatedFile(f"checkpoint has {len(data)} bytes, needs {need}")
    weights, biases = [], []
    for r, c in shapes:
        weights.append(np.frombuffer(data, "<f4", r * c, pos).reshape(r, c).astype(np.float32))
        pos += 4 * r * c
        biases.append(np.frombuffer(data, "<f4", c, pos).astype(np.float32))
        pos += 4 * c
    return NetParams(weights, biases), {"player": player, "iteration": iteration}


def save_checkpoint(path: str | Path, params: NetParams, player: int, iteration: int) -> int:
    data = checkpoint_bytes(params, player, iteration)
    Path(path).write_bytes(data)
    return len(data)
