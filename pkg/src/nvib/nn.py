"""Small module system over the tape: parameters, linear maps, layer norm, Adam."""

from __future__ import annotations

import math

import numpy as np

from .numerics import tensor as T
from .numerics.noise import NoiseSource
from .numerics.tensor import Parameter, Tensor


class Module:
    """Container whose Parameters and sub-Modules are found by attribute walk."""

    training: bool = True

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield from v.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for v in value:
                    if isinstance(v, Module):
                        yield from v.modules()

    def train(self, flag: bool = True) -> "Module":
        for m in self.modules():
            m.training = flag
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: NoiseSource, bias: bool = True,
                 scale: float | None = None, bias_init: float = 0.0):
        bound = scale if scale is not None else math.sqrt(6.0 / (n_in + n_out))
        self.weight = Parameter(bound * (2.0 * rng.uniform((n_in, n_out)) - 1.0))
        self.bias = Parameter(np.full(n_out, bias_init)) if bias else None

    def __call__(self, x) -> Tensor:
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Parameter(np.ones(dim))
        self.shift = Parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return T.normalize(x, axis=-1, eps=self.eps) * self.gain + self.shift


class Embedding(Module):
    def __init__(self, vocab: int, dim: int, rng: NoiseSource):
        self.table = Parameter(rng.normal((vocab, dim)) / math.sqrt(dim))

    def __call__(self, ids) -> Tensor:
        return T.embedding(self.table, ids)


def dropout(x: Tensor, rate: float, noise: NoiseSource | None, training: bool) -> Tensor:
    if not training or rate <= 0 or noise is None:
        return x
    keep = noise.bernoulli(1.0 - rate, x.shape)
    return x * (keep / (1.0 - rate))


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(dim // 2)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / dim)
    pe = np.zeros((n, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def clip_grad_norm(grads: list, max_norm: float) -> tuple[list, float]:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and total > max_norm:
        factor = max_norm / (total + 1e-12)
        grads = [g * factor for g in grads]
    return grads, total


class Adam:
    """Adam with bias correction; parameters are updated by ``Parameter.assign``."""

    def __init__(self, params: list, lr: float = 5e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 clip_norm: float | None = 0.1):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads) -> float:
        """Apply one update from a ``Gradients`` map; returns the pre-clip gradient norm."""
        gs = [grads[p] for p in self.params]
        gs, norm = clip_grad_norm(gs, self.clip_norm)
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for i, (p, g) in enumerate(zip(self.params, gs)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            step = self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.assign(p.data - step)
        return norm

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}
