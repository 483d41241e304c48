"""The NVIB layer: encoder states to a Dirichlet-process posterior and back.

At training time one vector is drawn per component (kappa_i = 1) and the
layer emits a weighted set of impulses plus the KL to the conditional
prior. At test time it returns attention over the mean distribution, which
is the Gaussian mixture given by the posterior parameters themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attention import DiscreteMixture, dattn_gaussian_mixture
from .distributions import sample_log_dirichlet
from .divergences import KLBreakdown, PriorSpec, conditional_prior, kl_one_sample
from .nn import Linear, Module
from .numerics import tensor as T
from .numerics.noise import NoiseSource
from .numerics.special import DomainError
from .numerics.tensor import ContractError, DimensionError, Tensor, as_tensor
from .posterior import LOG_SIGMA_BOUND, PosteriorParams


@dataclass
class NvibConfig:
    """Loss weights and prior settings.

    The per-sentence weights are lambda_D = lambda_d_prime / n and
    lambda_G = lambda_g_prime / (n * d). With ``conditional_prior`` off the
    KL target is alpha0_p itself rather than alpha0_p + n * delta_p.
    """

    lambda_d_prime: float = 0.0
    lambda_g_prime: float = 0.0
    delta_p: float = 1.0
    alpha0_p: float = 1.0
    conditional_prior: bool = True

    def __post_init__(self):
        if self.lambda_d_prime < 0 or self.lambda_g_prime < 0:
            raise DomainError("loss weights must be >= 0")
        if self.delta_p <= 0 or self.alpha0_p <= 0:
            raise DomainError("delta_p and alpha0_p must be > 0")

    def prior(self) -> PriorSpec:
        return PriorSpec(alpha0_p=self.alpha0_p, delta_p=self.delta_p)

    def lambdas(self, n, d: int):
        n = np.asarray(n, dtype=np.float64)
        return self.lambda_d_prime / n, self.lambda_g_prime / (n * d)


class NvibLayer(Module):
    """Three linear heads over encoder states: pseudo-count, mean, log std.

    The pseudo-count head starts with small weights and a positive bias so
    that a fresh layer keeps every token (alpha near ``alpha_init``).
    """

    def __init__(self, model_dim: int, dim: int, config: NvibConfig, rng: NoiseSource,
                 alpha_init: float = 1.0, log_sigma_init: float = 0.0):
        self.config = config
        self.dim = dim
        self.alpha_head = Linear(model_dim, 1, rng, scale=0.01, bias_init=alpha_init)
        self.mu_head = Linear(model_dim, dim, rng)
        self.log_sigma_head = Linear(model_dim, dim, rng, scale=0.01, bias_init=log_sigma_init)

    def __call__(self, states, lengths=None) -> PosteriorParams:
        return project_posterior(self, states, lengths)


def _lengths_mask(m: int, lead: tuple, lengths) -> tuple[np.ndarray, np.ndarray]:
    if lengths is None:
        lengths = np.full(lead, m)
    lengths = np.asarray(lengths)
    if lengths.shape != lead:
        raise DimensionError(f"lengths shape {lengths.shape} does not match batch {lead}")
    if np.any(lengths < 1) or np.any(lengths > m):
        raise DomainError("every sequence needs 1 <= n <= padded length")
    valid = np.arange(m) < lengths[..., None]
    return lengths, valid


def project_posterior(layer: NvibLayer, states, lengths=None) -> PosteriorParams:
    """Posterior parameters for states of shape (..., n, model_dim).

    Padding positions (index >= length) get alpha = 0. The prior row
    (alpha0_p, 0, 0) is appended last.
    """
    states = as_tensor(states)
    if states.ndim < 2 or states.shape[-2] < 1:
        raise ContractError("need at least one encoder state")
    lead, m = states.shape[:-2], states.shape[-2]
    lengths, valid = _lengths_mask(m, lead, lengths)
    alphas = T.relu(T.reshape(layer.alpha_head(states), lead + (m,)))
    alphas = T.where(valid, alphas, 0.0)
    mus = layer.mu_head(states)
    log_sig = T.clip(layer.log_sigma_head(states), -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)
    d = layer.dim
    prior_a = np.full(lead + (1,), layer.config.alpha0_p)
    zeros = np.zeros(lead + (1, d))
    return PosteriorParams(
        alphas=T.concat([alphas, prior_a], axis=-1),
        mus=T.concat([mus, zeros], axis=-2),
        log_sigmas=T.concat([log_sig, zeros], axis=-2),
        lengths=lengths,
    )


def nvib_forward_train(post: PosteriorParams, noise: NoiseSource, config: NvibConfig):
    """One vector per unmasked component plus Dirichlet weights, and the KL.

    Draw order: normals for the vectors, then the Dirichlet noise. For an
    unbatched posterior the masked components are removed from the
    mixture; batched mixtures keep a fixed width and carry a mask.
    """
    mask = post.mask
    eps = noise.normal(post.mus.shape)
    z = post.mus + post.sigmas * eps
    log_pi = sample_log_dirichlet(post.alphas, noise, mask=mask)
    if mask.ndim == 1:
        keep = np.flatnonzero(mask)
        log_pi = T.getitem(log_pi, keep)
        z = T.getitem(z, keep)
        mixture = DiscreteMixture(T.exp(log_pi), z, log_weights=log_pi, mask=np.ones(len(keep), dtype=bool))
    else:
        mixture = DiscreteMixture(T.where(mask, T.exp(log_pi), 0.0), z, log_weights=log_pi, mask=mask)
    kl = nvib_kl(post, config)
    return mixture, kl


def nvib_kl(post: PosteriorParams, config: NvibConfig) -> KLBreakdown:
    """kl_one_sample against the (by default conditional) prior, weighted per sentence length."""
    n = post.lengths
    lam_d, lam_g = config.lambdas(n, post.dim)
    prior = config.prior()
    a0p = conditional_prior(prior, n) if config.conditional_prior else prior.alpha0_p
    return kl_one_sample(post, a0p, prior=None, lambda_d=lam_d, lambda_g=lam_g)


def nvib_forward_test(post: PosteriorParams) -> Callable[[Tensor], Tensor]:
    """Attention over the mean distribution: a closure u -> Gaussian-mixture denoising attention."""
    if not np.all(post.mask.any(axis=-1)):
        raise ContractError("posterior has no unmasked component")

    def attend(u, d: int | None = None) -> Tensor:
        return dattn_gaussian_mixture(u, post, d)

    return attend


def retained_proportion(post: PosteriorParams):
    """Share of token components with alpha > 0; the prior row is ignored.

    Returns a float for one posterior and an array for a batch.
    """
    tokens = post.alphas.data[..., :-1]
    n = np.asarray(post.lengths, dtype=np.float64)
    valid = np.arange(tokens.shape[-1]) < n[..., None]
    nu = ((tokens > 0) & valid).sum(axis=-1) / n
    return float(nu) if np.ndim(nu) == 0 else nu


__all__ = [
    "NvibConfig", "NvibLayer", "project_posterior", "nvib_forward_train", "nvib_forward_test",
    "nvib_kl", "retained_proportion",
]
