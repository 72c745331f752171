"""Shared training machinery: schedule, Adam optimizer, linear scorers.

Both decoders are linear models over hashed sparse features, optionally with
a dense head over projected external vectors.  The decoder weights and the
projection form two parameter groups with separate base learning rates; the
warmup ramp applies to the projection group only, while plateau-driven
halving applies to both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ADAM_EPSILON = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    decoder_lr: float = 1e-3
    projection_lr: float = 2e-5
    patience: int = 2
    lr_decay: float = 0.5
    warmup_updates: int = 160
    max_epochs: int = 20
    seeds: tuple = (1, 2, 3, 4, 5)
    hash_bits: int = 22

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.decoder_lr <= 0 or self.projection_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.warmup_updates < 1:
            raise ValueError("warmup_updates must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        self.seeds = tuple(int(s) for s in self.seeds)


@dataclass(frozen=True)
class LrMultipliers:
    warmup: float
    plateau: float

    @property
    def decoder(self) -> float:
        return self.plateau

    @property
    def projection(self) -> float:
        return self.warmup * self.plateau


def count_plateau_halvings(dev_history, patience: int) -> int:
    """Number of times `patience` consecutive epochs passed without a new
    best dev score; the stall counter resets after each halving."""
    best = None
    stalled = 0
    halvings = 0
    for score in dev_history:
        if best is None or score > best:
            best = score
            stalled = 0
        else:
            stalled += 1
            if stalled == patience:
                halvings += 1
                stalled = 0
    return halvings


def lr_schedule(step: int, epoch_dev_history, config: TrainConfig) -> LrMultipliers:
    """Multipliers after `step` completed updates and the given per-epoch dev
    history: a linear 0-to-1 warmup over `warmup_updates` (projection group
    only) and a halving per plateau (both groups)."""
    warmup = min(1.0, step / config.warmup_updates)
    plateau = config.lr_decay ** count_plateau_halvings(
        epoch_dev_history, config.patience)
    return LrMultipliers(warmup=warmup, plateau=plateau)


class HashedLinear:
    """Sparse linear layer mapping hashed feature indices to score vectors.

    Rows are materialized on first touch (zero-initialized), so memory scales
    with observed features rather than 2**bits.
    """

    def __init__(self, n_outputs: int, bits: int):
        self.n_outputs = n_outputs
        self.bits = bits
        self.rows: dict[int, np.ndarray] = {}

    def scores(self, fv) -> np.ndarray:
        out = np.zeros(self.n_outputs)
        for index, weight in fv.pairs:
            row = self.rows.get(index)
            if row is not None:
                out += weight * row
        return out

    def accumulate_gradient(self, fv, grad_out, grad_rows: dict):
        for index, weight in fv.pairs:
            existing = grad_rows.get(index)
            if existing is None:
                grad_rows[index] = weight * grad_out
            else:
                grad_rows[index] = existing + weight * grad_out

    def copy(self) -> "HashedLinear":
        clone = HashedLinear(self.n_outputs, self.bits)
        clone.rows = {k: v.copy() for k, v in self.rows.items()}
        return clone

    def to_arrays(self):
        indices = np.array(sorted(self.rows), dtype="<u8")
        data = np.stack([self.rows[int(i)] for i in indices]) \
            if len(indices) else np.zeros((0, self.n_outputs))
        return indices, data.astype("<f8")

    @classmethod
    def from_arrays(cls, n_outputs: int, bits: int, indices, data) -> "HashedLinear":
        layer = cls(n_outputs, bits)
        for index, row in zip(indices, data):
            layer.rows[int(index)] = np.asarray(row, dtype=np.float64).copy()
        return layer


class DenseLinear:
    """Dense linear head over projected external vectors."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=np.float64)

    @classmethod
    def zeros(cls, dim_in: int, n_outputs: int) -> "DenseLinear":
        return cls(np.zeros((dim_in, n_outputs)))

    def scores(self, x: np.ndarray) -> np.ndarray:
        return x @ self.matrix

    def copy(self) -> "DenseLinear":
        return DenseLinear(self.matrix.copy())


class RowAdam:
    """Adam over lazily-touched rows; moments update only where gradients
    are nonzero (sparse semantics), with a shared step counter for bias
    correction."""

    def __init__(self, beta1: float, beta2: float, eps: float = ADAM_EPSILON):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[int, np.ndarray] = {}
        self.v: dict[int, np.ndarray] = {}
        self.t = 0

    def step(self, layer: HashedLinear, grad_rows: dict, lr: float):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for index in sorted(grad_rows):
            grad = grad_rows[index]
            m = self.m.get(index)
            if m is None:
                m = np.zeros_like(grad)
                self.v[index] = np.zeros_like(grad)
            v = self.v[index]
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.m[index] = m
            self.v[index] = v
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            row = layer.rows.get(index)
            if row is None:
                row = np.zeros(layer.n_outputs)
            layer.rows[index] = row - lr * update


class DenseAdam:
    """Plain Adam over one dense array."""

    def __init__(self, beta1: float, beta2: float, eps: float = ADAM_EPSILON):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(param)
            self.v = np.zeros_like(param)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    dev_f1: float
    warmup_multiplier: float
    plateau_multiplier: float


class ScheduleState:
    """Tracks update count and per-epoch dev history during training."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.updates = 0
        self.dev_history: list[float] = []

    def multipliers(self) -> LrMultipliers:
        return lr_schedule(self.updates, self.dev_history, self.config)

    def after_update(self):
        self.updates += 1

    def after_epoch(self, dev_f1: float):
        self.dev_history.append(dev_f1)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    return shifted - np.log(np.exp(shifted).sum())
