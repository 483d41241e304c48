"""Reparameterized samplers and the bounded factorised Dirichlet process.

Every sampler is a deterministic function of its parameters and the noise
it is handed. Noise may be a ``NoiseSource`` (draws are taken in a fixed
order) or explicit arrays, which is how the tests pin values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import tensor as T
from .numerics.noise import NoiseSource
from .numerics.special import DomainError
from .numerics.tensor import DimensionError, Tensor, as_tensor

GAMMA_SWITCH = 0.6363
GAUSSIAN_FLOOR = 1e-8
MASKED_LOG_WEIGHT = -1e30
TINY = float(np.finfo(np.float64).tiny)


@dataclass
class GaussianDiag:
    """Diagonal Gaussian N(mu, diag(sigma^2))."""

    mu: Tensor
    sigma: Tensor

    def __post_init__(self):
        self.mu = as_tensor(self.mu)
        self.sigma = as_tensor(self.sigma)
        if self.mu.shape != self.sigma.shape:
            raise DimensionError(f"mu {self.mu.shape} and sigma {self.sigma.shape} differ")
        s = self.sigma.data
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise DomainError("sigma must be strictly positive and finite")

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    @classmethod
    def standard(cls, d: int) -> "GaussianDiag":
        return cls(np.zeros(d), np.ones(d))


@dataclass
class BoundedDPSpec:
    """Components (Gaussian, pseudo-count) and per-component sample counts kappa."""

    components: list
    kappas: Sequence[int]

    def __post_init__(self):
        if len(self.components) != len(self.kappas):
            raise DimensionError("one kappa per component is required")
        if any(int(k) != k or k < 1 for k in self.kappas):
            raise DomainError("kappas must be integers >= 1")
        alphas = [float(np.asarray(as_tensor(a).data)) for _, a in self.components]
        if any(a < 0 for a in alphas):
            raise DomainError("pseudo-counts must be >= 0")
        if not any(a > 0 for a in alphas):
            raise DomainError("at least one component needs a positive pseudo-count")
        self.kappas = [int(k) for k in self.kappas]

    @property
    def kappa0(self) -> int:
        return int(sum(self.kappas))


@dataclass
class MixtureSample:
    """One discrete mixture drawn from a bounded factorised DP."""

    weights: Tensor
    vectors: Tensor
    component_of: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _noise_pair(noise, shape):
    """(uniform, normal) arrays of ``shape`` from a NoiseSource or a given pair."""
    if isinstance(noise, NoiseSource):
        return noise.uniform(shape), noise.normal(shape)
    u, eps = noise
    u = np.broadcast_to(np.asarray(u, dtype=np.float64), shape)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), shape)
    return u, eps


def sample_gaussian(g: GaussianDiag, eps) -> Tensor:
    """Location-scale draw mu + sigma * eps."""
    eps = np.asarray(eps, dtype=g.mu.dtype)
    if eps.shape[-1:] != g.mu.shape[-1:]:
        raise DimensionError(f"noise shape {eps.shape} does not match dimension {g.dim}")
    return g.mu + g.sigma * eps


def gamma_inverse_cdf_approx(alpha, u) -> Tensor:
    """Gamma(alpha, 1) draw via (u * alpha * Gamma(alpha)) ** (1/alpha), in log space."""
    alpha = as_tensor(alpha)
    u = np.asarray(u, dtype=alpha.dtype)
    if np.any(alpha.data <= 0) or not np.all(np.isfinite(alpha.data)):
        raise DomainError("alpha must be > 0")
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("u must lie in the open interval (0, 1)")
    return T.exp((np.log(u) + T.log(alpha) + T.lgamma(alpha)) / alpha)


def gamma_gaussian_approx(alpha, eps, floor: float = GAUSSIAN_FLOOR) -> Tensor:
    """Gamma(alpha, 1) draw via alpha + sqrt(alpha) * eps, truncated at ``floor``."""
    alpha = as_tensor(alpha)
    if np.any(alpha.data <= 0):
        raise DomainError("alpha must be > 0")
    eps = np.asarray(eps, dtype=alpha.dtype)
    return T.maximum(alpha + T.sqrt(alpha) * eps, floor)


def sample_gamma(alpha, noise) -> Tensor:
    """Blend of the two approximations, switching at alpha = 0.6363.

    Ties go to the Gaussian branch. Elementwise over array-valued alpha.
    """
    alpha = as_tensor(alpha)
    if np.any(alpha.data <= 0) or not np.all(np.isfinite(alpha.data)):
        raise DomainError("alpha must be finite and > 0")
    u, eps = _noise_pair(noise, alpha.shape)
    small = alpha.data < GAMMA_SWITCH
    if not small.any():
        return gamma_gaussian_approx(alpha, eps)
    # u ** (1/alpha) underflows to 0 for tiny alpha; keep the draw strictly positive
    inv = T.maximum(gamma_inverse_cdf_approx(alpha, u), TINY)
    if small.all():
        return inv
    return T.where(small, inv, gamma_gaussian_approx(alpha, eps))


def sample_log_gamma(alpha, noise) -> Tensor:
    """ln of ``sample_gamma``, evaluated without leaving log space.

    The inverse-CDF branch underflows to 0 for small alpha when
    exponentiated; here its log is returned directly.
    """
    alpha = as_tensor(alpha)
    if np.any(alpha.data <= 0) or not np.all(np.isfinite(alpha.data)):
        raise DomainError("alpha must be finite and > 0")
    u, eps = _noise_pair(noise, alpha.shape)
    small = alpha.data < GAMMA_SWITCH
    log_inv = (np.log(u) + T.log(alpha) + T.lgamma(alpha)) / alpha
    if small.all():
        return log_inv
    log_gauss = T.log(gamma_gaussian_approx(alpha, eps))
    if not small.any():
        return log_gauss
    return T.where(small, log_inv, log_gauss)


def sample_log_dirichlet(alphas, noise, mask=None, axis: int = -1) -> Tensor:
    """ln of Dirichlet weights: log-Gamma draws minus their log-sum-exp.

    Masked entries get log-weight ``-inf`` replaced by a large negative
    constant so that downstream softmaxes stay finite.
    """
    alphas = as_tensor(alphas)
    if mask is None:
        mask = np.ones(alphas.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if np.any(alphas.data[mask] <= 0):
        raise DomainError("unmasked Dirichlet pseudo-counts must be > 0")
    if not np.all(mask.any(axis=axis)):
        raise DomainError("every Dirichlet needs at least one unmasked category")
    lg = T.where(mask, sample_log_gamma(T.where(mask, alphas, 1.0), noise), MASKED_LOG_WEIGHT)
    return lg - T.logsumexp(lg, axis=axis, keepdims=True)


def sample_dirichlet(alphas, noise, mask=None, axis: int = -1) -> Tensor:
    """Dirichlet weights pi_i = gamma_i / sum(gamma), normalised in log space.

    With ``mask`` given, entries where it is False get weight exactly 0 and
    their pseudo-counts may be 0; the remaining entries must be positive.
    """
    alphas = as_tensor(alphas)
    if mask is None and np.any(alphas.data <= 0):
        raise DomainError("Dirichlet pseudo-counts must be > 0")
    return T.exp(sample_log_dirichlet(alphas, noise, mask=mask, axis=axis))


def _exact_dirichlet(alphas: np.ndarray, noise: NoiseSource) -> np.ndarray:
    gam = noise.exact_gamma(alphas)
    return gam / gam.sum(axis=-1, keepdims=True)


def sample_bfdp(spec: BoundedDPSpec, noise, batch: int | None = None, exact: bool = False) -> MixtureSample:
    """Draw F = sum_i sum_j rho_i pi'_ij delta(z_ij).

    rho ~ Dir(alpha_1..alpha_m) over components with positive pseudo-count;
    pi'_i ~ Dir(alpha_i/kappa_i, ...) (skipped when kappa_i = 1);
    z_ij ~ G_i. ``batch`` adds a leading axis of independent draws.
    ``exact=True`` swaps the reparameterized Gamma approximations for exact
    Gamma draws (statistical oracle path, not differentiable).
    """
    if not isinstance(noise, NoiseSource):
        raise TypeError("sample_bfdp needs a NoiseSource")
    comps = spec.components
    lead = () if batch is None else (batch,)
    alphas = T.stack([as_tensor(a).reshape(()) for _, a in comps])
    active = alphas.data > 0
    if not active.any():
        raise DomainError("all pseudo-counts are zero")

    # total weight per component
    a_full = T.reshape(alphas, (1,) * len(lead) + alphas.shape)
    a_full = a_full * np.ones(lead + alphas.shape)
    mask = np.broadcast_to(active, a_full.shape)
    if exact:
        safe = np.where(mask, a_full.data, 1.0)
        rho = Tensor._wrap(np.where(mask, _exact_dirichlet_masked(safe, mask, noise), 0.0))
    else:
        rho = sample_dirichlet(a_full, noise, mask=mask)

    weights, vectors, owners = [], [], []
    for i, ((g, a), k) in enumerate(zip(comps, spec.kappas)):
        rho_i = rho[(Ellipsis, slice(i, i + 1))]
        if k == 1 or not active[i]:
            w = rho_i * np.ones(lead + (k,)) / (1.0 if k == 1 else k)
        else:
            inner_alpha = as_tensor(a) / k * np.ones(lead + (k,))
            if exact:
                inner = Tensor._wrap(_exact_dirichlet(inner_alpha.data, noise))
            else:
                inner = sample_dirichlet(inner_alpha, noise)
            w = rho_i * inner
        eps = noise.normal(lead + (k, g.dim))
        weights.append(w)
        vectors.append(sample_gaussian(g, eps))
        owners.extend([i] * k)
    return MixtureSample(
        weights=T.concat(weights, axis=-1),
        vectors=T.concat(vectors, axis=-2),
        component_of=np.asarray(owners, dtype=int),
    )


def _exact_dirichlet_masked(alphas: np.ndarray, mask: np.ndarray, noise: NoiseSource) -> np.ndarray:
    gam = np.where(mask, noise.exact_gamma(alphas), 0.0)
    return gam / gam.sum(axis=-1, keepdims=True)


__all__ = [
    "GAMMA_SWITCH", "GAUSSIAN_FLOOR", "GaussianDiag", "BoundedDPSpec", "MixtureSample",
    "sample_gaussian", "gamma_inverse_cdf_approx", "gamma_gaussian_approx", "sample_gamma",
    "sample_log_gamma", "sample_log_dirichlet", "sample_dirichlet", "sample_bfdp",
]
