"""Parameters of the Dirichlet-process posterior emitted by the encoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import tensor as T
from .numerics.special import DomainError
from .numerics.tensor import DimensionError, Tensor, as_tensor

LOG_SIGMA_BOUND = 8.0


@dataclass
class PosteriorParams:
    """Pseudo-counts, means and log standard deviations of the posterior components.

    Shapes are ``alphas (..., m)``, ``mus (..., m, d)`` and ``log_sigmas
    (..., m, d)``, with optional leading batch axes. When built by the NVIB
    layer the last component is the prior row ``(alpha0_p, 0, 0)``. A
    component with alpha = 0 is masked. ``lengths`` holds the token count n
    per item (defaults to m - 1).
    """

    alphas: Tensor
    mus: Tensor
    log_sigmas: Tensor
    lengths: np.ndarray | None = None

    def __post_init__(self):
        self.alphas = as_tensor(self.alphas)
        self.mus = as_tensor(self.mus)
        self.log_sigmas = as_tensor(self.log_sigmas)
        if self.mus.shape != self.log_sigmas.shape:
            raise DimensionError("mus and log_sigmas must have the same shape")
        if self.mus.shape[:-1] != self.alphas.shape:
            raise DimensionError(f"alphas {self.alphas.shape} do not match mus {self.mus.shape}")
        if np.any(self.alphas.data < 0) or not np.all(np.isfinite(self.alphas.data)):
            raise DomainError("pseudo-counts must be finite and >= 0")
        if np.any(self.alphas.data.sum(axis=-1) <= 0):
            raise DomainError("total pseudo-count must be > 0")
        if self.lengths is None:
            self.lengths = np.full(self.alphas.shape[:-1], self.alphas.shape[-1] - 1)
        self.lengths = np.asarray(self.lengths)

    @property
    def mask(self) -> np.ndarray:
        return self.alphas.data > 0

    @property
    def dim(self) -> int:
        return self.mus.shape[-1]

    @property
    def n_components(self) -> int:
        return self.alphas.shape[-1]

    @property
    def sigmas(self) -> Tensor:
        return T.exp(self.bounded_log_sigmas)

    @property
    def bounded_log_sigmas(self) -> Tensor:
        return T.clip(self.log_sigmas, -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)

    @property
    def alpha0(self) -> Tensor:
        return T.tsum(self.alphas, axis=-1)

    @classmethod
    def from_arrays(cls, alphas, mus, sigmas, lengths=None) -> "PosteriorParams":
        sig = np.asarray(sigmas, dtype=np.float64)
        return cls(np.asarray(alphas, dtype=np.float64), np.asarray(mus, dtype=np.float64), np.log(sig), lengths)
