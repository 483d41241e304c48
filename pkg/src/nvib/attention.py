"""Scaled dot-product attention and denoising attention.

Everything here works in the space of the attended vectors Z: a query
``u`` is already projected into that space (u = u' W^Q (W^K)^T), and the
value projection is applied by the caller. Queries may be a single vector
``(p,)`` or a stack ``(..., m, p)``; mixtures may carry matching leading
batch axes.

Denoising attention treats ``u`` as a Gaussian-noised observation (noise
variance sqrt(d) per dimension) of a vector drawn from a mixture, and
returns the posterior mean of that vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import tensor as T
from .numerics.tensor import ContractError, DimensionError, Tensor, as_tensor

MASK_LOGIT = -1e30
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ProjectionWeights:
    """Query, key and value projections, each p x d."""

    wq: Tensor
    wk: Tensor
    wv: Tensor

    def __post_init__(self):
        for name in ("wq", "wk", "wv"):
            t = as_tensor(getattr(self, name))
            if not np.all(np.isfinite(t.data)):
                raise ValueError(f"{name} has non-finite entries")
            setattr(self, name, t)

    def query_in_z_space(self, u_prime) -> Tensor:
        """u = u' W^Q (W^K)^T."""
        return T.matmul(T.matmul(_as_rows(u_prime), self.wq), T.transpose(self.wk))


@dataclass
class DiscreteMixture:
    """Weighted impulses. ``log_weights`` is optional; masked entries have weight 0."""

    weights: Tensor
    vectors: Tensor
    log_weights: Tensor | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        self.vectors = as_tensor(self.vectors)
        if self.vectors.shape[:-1] != self.weights.shape:
            raise DimensionError(f"weights {self.weights.shape} do not match vectors {self.vectors.shape}")
        if self.weights.shape[-1] == 0:
            raise ContractError("empty mixture")
        if self.mask is None:
            self.mask = self.weights.data > 0

    def logits(self) -> Tensor:
        """Log-weights with masked entries set to a large negative constant."""
        if self.log_weights is not None:
            return T.where(self.mask, self.log_weights, MASK_LOGIT)
        safe = T.where(self.mask, self.weights, 1.0)
        return T.where(self.mask, T.log(safe), MASK_LOGIT)


def _as_rows(u) -> Tensor:
    u = as_tensor(u)
    return T.reshape(u, (1,) + u.shape) if u.ndim == 1 else u


def _restore(out: Tensor, u_orig) -> Tensor:
    return T.reshape(out, out.shape[1:]) if as_tensor(u_orig).ndim == 1 else out


def _scale(d, p: int) -> float:
    return math.sqrt(p if d is None else d)


def attn(u, Z, d: int | None = None) -> Tensor:
    """softmax(u Z^T / sqrt(d)) Z; ``d`` defaults to the vector dimension."""
    Z = as_tensor(Z)
    if Z.ndim < 2 or Z.shape[-2] == 0:
        raise ContractError("attention needs a non-empty set of vectors")
    uu = _as_rows(u)
    if uu.shape[-1] != Z.shape[-1]:
        raise DimensionError(f"query dimension {uu.shape[-1]} != vector dimension {Z.shape[-1]}")
    s = _scale(d, Z.shape[-1])
    scores = T.matmul(uu, T.transpose(Z)) / s
    return _restore(T.matmul(T.softmax(scores, axis=-1), Z), u)


def impulse_mixture(Z, d: int | None = None) -> DiscreteMixture:
    """Impulses at the rows of Z weighted by softmax(||z||^2 / (2 sqrt(d)))."""
    Z = as_tensor(Z)
    if Z.ndim < 2 or Z.shape[-2] == 0:
        raise ContractError("impulse mixture needs at least one vector")
    s = _scale(d, Z.shape[-1])
    sq = T.tsum(Z * Z, axis=-1) / (2.0 * s)
    return DiscreteMixture(weights=T.softmax(sq, axis=-1), vectors=Z, log_weights=T.log_softmax(sq, axis=-1),
                           mask=np.ones(Z.shape[:-1], dtype=bool))


def dattn_discrete(u, m: DiscreteMixture, d: int | None = None) -> Tensor:
    """Denoising attention over a mixture of impulses.

    Weight of impulse k is softmax_k(ln pi_k + u.z_k / sqrt(d) - ||z_k||^2 / (2 sqrt(d)));
    the result is the weighted sum of the z_k.
    """
    if not np.all(m.mask.any(axis=-1)):
        raise ContractError("mixture has no component with positive weight")
    Z = m.vectors
    uu = _as_rows(u)
    if uu.shape[-1] != Z.shape[-1]:
        raise DimensionError(f"query dimension {uu.shape[-1]} != vector dimension {Z.shape[-1]}")
    s = _scale(d, Z.shape[-1])
    bias = m.logits() - T.tsum(Z * Z, axis=-1) / (2.0 * s)
    scores = T.matmul(uu, T.transpose(Z)) / s + T.reshape(bias, bias.shape[:-1] + (1,) + bias.shape[-1:])
    w = T.softmax(scores, axis=-1)
    return _restore(T.matmul(w, Z), u)


def gaussian_mixture_weights(u, alphas, mus, sigmas, d: int | None = None, mask=None):
    """Attention weights and interpolation factors of the Gaussian-mixture form.

    Returns ``(w, r, m_over)`` where ``w`` has shape (..., q, n), ``r`` is
    1 / (1/sqrt(d) + 1/sigma^2) and ``m_over = mu / sigma^2 * r``.
    """
    alphas, mus, sigmas = as_tensor(alphas), as_tensor(mus), as_tensor(sigmas)
    if mask is None:
        mask = alphas.data > 0
    mask = np.asarray(mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ContractError("every component is masked")
    uu = _as_rows(u)
    s = _scale(d, mus.shape[-1])
    var = sigmas * sigmas
    v = var + s                        # per-dimension variance sqrt(d) + sigma^2
    inv_v = 1.0 / v
    # sum_h (u_h - mu_ih)^2 / v_ih expanded into matrix products
    quad = (T.matmul(uu * uu, T.transpose(inv_v))
            - 2.0 * T.matmul(uu, T.transpose(mus * inv_v))
            + T.reshape(T.tsum(mus * mus * inv_v, axis=-1), mus.shape[:-2] + (1, mus.shape[-2])))
    log_norm = T.tsum(T.log(v), axis=-1) + mus.shape[-1] * LOG_2PI
    log_alpha = T.where(mask, T.log(T.where(mask, alphas, 1.0)), MASK_LOGIT)
    bias = log_alpha - 0.5 * log_norm
    logits = T.reshape(bias, bias.shape[:-1] + (1,) + bias.shape[-1:]) - 0.5 * quad
    w = T.softmax(logits, axis=-1)
    r = 1.0 / (1.0 / s + 1.0 / var)
    m_over = mus / var * r
    return w, r, m_over


def dattn_gaussian_mixture(u, post, d: int | None = None) -> Tensor:
    """Denoising attention over the mixture of Gaussians sum_i alpha_i N(mu_i, sigma_i^2).

    Component i contributes the precision-weighted interpolant
    (u/sqrt(d) + mu_i/sigma_i^2) / (1/sqrt(d) + 1/sigma_i^2), weighted by
    alpha_i N(u; mu_i, sqrt(d) + sigma_i^2). ``post`` is a PosteriorParams
    or any object with ``alphas``, ``mus`` and ``sigmas``.
    """
    s = _scale(d, post.mus.shape[-1])
    w, r, m_over = gaussian_mixture_weights(u, post.alphas, post.mus, post.sigmas, d=d, mask=post.alphas.data > 0)
    uu = _as_rows(u)
    out = uu / s * T.matmul(w, r) + T.matmul(w, m_over)
    return _restore(out, u)


def interpolants(u, post, d: int | None = None) -> Tensor:
    """Per-component interpolants, shape (..., q, n, p); used for checks."""
    s = _scale(d, post.mus.shape[-1])
    uu = _as_rows(u)
    var = post.sigmas * post.sigmas
    ue = T.reshape(uu, uu.shape[:-1] + (1,) + uu.shape[-1:])
    mus = T.reshape(post.mus, post.mus.shape[:-2] + (1,) + post.mus.shape[-2:])
    var = T.reshape(var, mus.shape)
    return (ue / s + mus / var) / (1.0 / s + 1.0 / var)


__all__ = [
    "ProjectionWeights", "DiscreteMixture", "attn", "impulse_mixture", "dattn_discrete",
    "dattn_gaussian_mixture", "gaussian_mixture_weights", "interpolants", "MASK_LOGIT",
]
