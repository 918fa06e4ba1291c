"""Trainable parameters, initialization, Adam, and gradient clipping."""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tensor
from .errors import NumericError


class Rng:
    """Seeded, platform-stable random source (PCG64).

    `child(*key)` derives an independent stream from the same seed, so
    sub-systems (init, candidate sampling, epoch shuffling) stay decoupled
    while the whole run remains a pure function of one seed.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = _key
        self.gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_key)))

    def child(self, *key: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(int(k) for k in key))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self.gen.uniform(low, high, size)

    def integers(self, low: int, high: int) -> int:
        return int(self.gen.integers(low, high))

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def sample_without_replacement(self, n: int, k: int) -> list[int]:
        return [int(v) for v in self.gen.choice(n, size=k, replace=False)]


class Parameter(Tensor):
    """A named leaf tensor tracked by the optimizer and checkpoints."""

    __slots__ = ("name", "trainable")

    def __init__(self, name: str, value: np.ndarray, trainable: bool = True):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.data.shape})"


def xavier_uniform(fan_in: int, fan_out: int, rng: Rng) -> np.ndarray:
    """Matrix with entries i.i.d. uniform in [-b, b], b = sqrt(6/(fan_in+fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("xavier_uniform fans must be >= 1")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def clip_global_norm(params: Iterable[Parameter], max_norm: float = 5.0) -> float:
    """Scale all gradients by max_norm/g when their global L2 norm g exceeds it.

    Returns the pre-clip global norm.  Idempotent: a second call is a no-op.
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if not math.isfinite(total):
        raise NumericError("gradient norm is not finite")
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


class Adam:
    """Adam with bias correction; defaults follow the original suggestions."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        """Apply one update; aborts without mutating on non-finite gradients."""
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient in {p.name}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
