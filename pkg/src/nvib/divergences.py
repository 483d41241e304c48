"""Closed-form KL divergences between bounded factorised DPs.

The posterior BFDP(G^q, alpha^q, kappa) is compared with the prior
rewritten in the same factorised form: every component carries the prior
base Gaussian and pseudo-count ``alpha^q_i * alpha0_p / alpha0_q``. The
divergence splits into a Dirichlet part ``l_d`` (weights) and a Gaussian
part ``l_g`` (vectors).

Masked components (pseudo-count 0) are dropped from every sum. All
functions accept leading batch axes and return per-item values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import GaussianDiag
from .numerics import tensor as T
from .numerics.special import DomainError
from .numerics.tensor import DimensionError, Tensor, as_tensor
from .posterior import PosteriorParams


@dataclass
class PriorSpec:
    alpha0_p: float = 1.0
    base: GaussianDiag | None = None
    delta_p: float = 1.0

    def __post_init__(self):
        if self.alpha0_p <= 0:
            raise DomainError("alpha0_p must be > 0")
        if self.delta_p <= 0:
            raise DomainError("delta_p must be > 0")

    def base_params(self, d: int):
        if self.base is None:
            return np.zeros(d), np.zeros(d)
        if self.base.dim != d:
            raise DimensionError(f"prior base has dimension {self.base.dim}, expected {d}")
        return self.base.mu.data, np.log(self.base.sigma.data)


@dataclass
class KLBreakdown:
    l_d: Tensor
    l_g: Tensor
    weighted: Tensor = field(default=None)

    @property
    def total(self) -> Tensor:
        return self.l_d + self.l_g


def conditional_prior(prior: PriorSpec, n) -> np.ndarray | float:
    """alpha0_p + n * delta_p: the prior concentration after seeing only the length."""
    n_arr = np.asarray(n, dtype=np.float64)
    if np.any(n_arr < 1):
        raise DomainError("token count must be >= 1")
    out = prior.alpha0_p + n_arr * prior.delta_p
    return float(out) if out.ndim == 0 else out


def kl_gaussian_diag(q: GaussianDiag, p: GaussianDiag) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the last axis."""
    if q.mu.shape[-1] != p.mu.shape[-1]:
        raise DimensionError("Gaussians have different dimensions")
    ratio = (q.sigma / p.sigma) ** 2
    diff = (q.mu - p.mu) / p.sigma
    return 0.5 * T.tsum(diff * diff + ratio - 1.0 - T.log(ratio), axis=-1)


def kl_dirichlet(alpha_q, alpha_p) -> Tensor:
    """KL(Dir(alpha_q) || Dir(alpha_p)) along the last axis."""
    aq, ap = as_tensor(alpha_q), as_tensor(alpha_p)
    if aq.shape != ap.shape:
        raise DimensionError(f"shape mismatch {aq.shape} vs {ap.shape}")
    if np.any(aq.data <= 0) or np.any(ap.data <= 0):
        raise DomainError("Dirichlet pseudo-counts must be > 0")
    a0q = T.tsum(aq, axis=-1, keepdims=True)
    a0p = T.tsum(ap, axis=-1)
    terms = -T.lgamma(aq) + T.lgamma(ap) + (aq - ap) * (T.digamma(aq) - T.digamma(a0q))
    return T.lgamma(T.reshape(a0q, a0p.shape)) - T.lgamma(a0p) + T.tsum(terms, axis=-1)


def _gaussian_terms(post: PosteriorParams, prior: PriorSpec | None) -> Tensor:
    """Per-component sum over dimensions of the Gaussian KL integrand (without 1/2)."""
    mu_p, log_sig_p = (np.zeros(post.dim), np.zeros(post.dim)) if prior is None else prior.base_params(post.dim)
    log_sig = post.bounded_log_sigmas
    log_ratio2 = 2.0 * (log_sig - log_sig_p)
    diff = (post.mus - mu_p) * np.exp(-log_sig_p)
    return T.tsum(diff * diff + T.exp(log_ratio2) - 1.0 - log_ratio2, axis=-1)


def _prepare(post: PosteriorParams, prior_alpha0):
    mask = post.mask
    if not np.all(mask.any(axis=-1)):
        raise DomainError("every posterior needs at least one unmasked component")
    a = T.where(mask, post.alphas, 1.0)
    a0q = T.tsum(T.where(mask, post.alphas, 0.0), axis=-1)
    a0p = np.asarray(prior_alpha0, dtype=a.dtype)
    if np.any(a0p <= 0):
        raise DomainError("prior concentration must be > 0")
    a0p = np.broadcast_to(a0p, a0q.shape)
    return mask, a, a0q, a0p


def _finish(l_d: Tensor, l_g: Tensor, lambda_d, lambda_g) -> KLBreakdown:
    return KLBreakdown(l_d=l_d, l_g=l_g, weighted=l_d * lambda_d + l_g * lambda_g)


def kl_bfdp_given_kappa(post: PosteriorParams, prior_alpha0, kappas, prior: PriorSpec | None = None,
                        lambda_d=1.0, lambda_g=1.0) -> KLBreakdown:
    """Exact KL between posterior and prior BFDPs for known per-component counts kappa."""
    kappas = np.asarray(kappas, dtype=np.float64)
    if np.any(kappas < 1) or np.any(kappas != np.round(kappas)):
        raise DomainError("kappas must be integers >= 1")
    kappas = np.broadcast_to(kappas, post.alphas.shape)
    mask, a, a0q, a0p = _prepare(post, prior_alpha0)
    a0q_k = T.reshape(a0q, a0q.shape + (1,))
    a0p_k = a0p[..., None]
    per_k = a / kappas
    inner = (a / a0q_k) * T.digamma(per_k)
    inner = T.tsum(T.where(mask, inner, 0.0), axis=-1)
    gam = kappas * (T.lgamma(per_k * (a0p_k / a0q_k)) - T.lgamma(per_k))
    gam = T.tsum(T.where(mask, gam, 0.0), axis=-1)
    l_d = T.lgamma(a0q) - T.lgamma(a0p) + (a0q - a0p) * (inner - T.digamma(a0q)) + gam
    g_terms = T.where(mask, kappas * _gaussian_terms(post, prior), 0.0)
    l_g = 0.5 * T.tsum(g_terms, axis=-1)
    return _finish(l_d, l_g, lambda_d, lambda_g)


def kl_bfdp_expected_kappa(post: PosteriorParams, prior_alpha0, kappa0, prior: PriorSpec | None = None,
                           lambda_d=1.0, lambda_g=1.0) -> KLBreakdown:
    """KL with kappa_i replaced by its expectation kappa0 * alpha_i / alpha0_q."""
    k0 = np.asarray(kappa0, dtype=np.float64)
    if np.any(k0 < 1):
        raise DomainError("kappa0 must be >= 1")
    mask, a, a0q, a0p = _prepare(post, prior_alpha0)
    l_d = (T.lgamma(a0q) - T.lgamma(a0p)
           + (a0q - a0p) * (T.digamma(a0q / k0) - T.digamma(a0q))
           + k0 * (T.lgamma(a0p / k0) - T.lgamma(a0q / k0)))
    share = a / T.reshape(a0q, a0q.shape + (1,))
    g_terms = T.where(mask, share * _gaussian_terms(post, prior), 0.0)
    l_g = 0.5 * k0 * T.tsum(g_terms, axis=-1)
    return _finish(l_d, l_g, lambda_d, lambda_g)


def kl_one_sample(post: PosteriorParams, prior_alpha0, prior: PriorSpec | None = None,
                  lambda_d=1.0, lambda_g=1.0) -> KLBreakdown:
    """KL for kappa_i = 1: one vector per component, so no inner Dirichlet term.

    l_d = lnG(a0q) - lnG(a0p) + sum_i [lnG(a0p a_i / a0q) - lnG(a_i)
          + a_i (1 - a0p / a0q)(psi(a_i) - psi(a0q))]
    """
    mask, a, a0q, a0p = _prepare(post, prior_alpha0)
    a0q_k = T.reshape(a0q, a0q.shape + (1,))
    a0p_k = a0p[..., None]
    terms = (T.lgamma(a * (a0p_k / a0q_k)) - T.lgamma(a)
             + a * (1.0 - a0p_k / a0q_k) * (T.digamma(a) - T.digamma(a0q_k)))
    l_d = T.lgamma(a0q) - T.lgamma(a0p) + T.tsum(T.where(mask, terms, 0.0), axis=-1)
    l_g = 0.5 * T.tsum(T.where(mask, _gaussian_terms(post, prior), 0.0), axis=-1)
    return _finish(l_d, l_g, lambda_d, lambda_g)


__all__ = [
    "PriorSpec", "KLBreakdown", "conditional_prior", "kl_gaussian_diag", "kl_dirichlet",
    "kl_bfdp_given_kappa", "kl_bfdp_expected_kappa", "kl_one_sample",
]
