"""Seeded noise for reparameterized sampling."""

from __future__ import annotations

import numpy as np

_TWO53 = float(2**53)


class NoiseSource:
    """Stream of uniform and standard-normal draws from a PCG64 generator.

    Same seed and same call sequence give bit-identical draws. Uniform
    draws are strictly inside (0, 1); normal draws are never clipped.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._rng = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, shape=()) -> np.ndarray:
        k = self._rng.integers(0, 2**53, size=shape, dtype=np.int64)
        return (k.astype(np.float64) + 0.5) / _TWO53

    def normal(self, shape=()) -> np.ndarray:
        return self._rng.standard_normal(size=shape)

    def exact_gamma(self, alpha, shape=None) -> np.ndarray:
        """Exact Gamma(alpha, 1) draws; for oracles only, not differentiable."""
        return self._rng.standard_gamma(alpha, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._rng.integers(low, high, size=shape)

    def choice(self, n: int, p=None, shape=None):
        return self._rng.choice(n, size=shape, p=p)

    def permutation(self, n: int) -> np.ndarray:
        return self._rng.permutation(n)

    def bernoulli(self, p: float, shape) -> np.ndarray:
        return self._rng.random(size=shape) < p

    def spawn(self, key: int) -> "NoiseSource":
        """Independent child stream, a deterministic function of (seed, key)."""
        ss = np.random.SeedSequence([self.seed, int(key)])
        child = NoiseSource.__new__(NoiseSource)
        child.seed = int(ss.generate_state(1, dtype=np.uint64)[0])
        child._rng = np.random.Generator(np.random.PCG64(ss))
        return child
