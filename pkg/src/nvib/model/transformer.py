"""Toy encoder-decoder with a swappable latent between encoder and decoder.

Cross-attention always runs in the space of the latent vectors: the
decoder state x is mapped to a query u = x W^Q (W^K)^T, denoising attention
returns a vector in that space, and W^V then W^O map it back. Over a set of
impulses weighted by softmax(||z||^2 / (2 sqrt(d))) this is exactly
ordinary attention, which is how the plain Transformer (T) is run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..attention import MASK_LOGIT, DiscreteMixture, dattn_discrete
from ..divergences import KLBreakdown
from ..layer import NvibLayer, nvib_forward_test, nvib_forward_train, nvib_kl, retained_proportion
from ..nn import Embedding, LayerNorm, Linear, Module, dropout, sinusoidal_positions
from ..numerics import tensor as T
from ..numerics.noise import NoiseSource
from ..numerics.special import DomainError
from ..numerics.tensor import Tensor, as_tensor
from ..posterior import LOG_SIGMA_BOUND, PosteriorParams
from .config import BOS, EOS, PAD, ModelConfig


@dataclass
class LossRecord:
    """Batch means of the loss parts; ``total`` is the differentiable objective."""

    l_r: float
    l_d: float
    l_g: float
    total: Tensor
    nu: float = 1.0

    @property
    def value(self) -> float:
        return float(self.total.data)


@dataclass
class Latent:
    """What the decoder cross-attends to.

    ``attend`` maps Z-space queries (B, q, d) to Z-space outputs. ``kl``
    holds per-sentence KL terms (None for T).
    """

    attend: Callable[[Tensor], Tensor]
    kl: KLBreakdown | None = None
    post: PosteriorParams | None = None
    retained: np.ndarray | None = None


def pad_batch(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences with PAD; returns (ids (B, L), lengths (B,))."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if len(seqs) == 0 or lengths.min() < 1:
        raise DomainError("need at least one non-empty sequence")
    ids = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    return ids, lengths


def stride_keep(n: int, stride: float) -> np.ndarray:
    """Boolean keep-mask over n positions; i is dropped when floor((i+1)S) > floor(iS)."""
    i = np.arange(n)
    return ~(np.floor((i + 1) * stride) > np.floor(i * stride))


def _masked_softmax_attend(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray) -> Tensor:
    scores = T.matmul(q, T.transpose(k)) / math.sqrt(k.shape[-1])
    w = T.softmax(T.where(mask, scores, MASK_LOGIT), axis=-1)
    return T.matmul(w, v)


def impulse_latent(Z: Tensor, mask: np.ndarray) -> DiscreteMixture:
    """Masked impulses with the weights that make denoising attention ordinary attention."""
    sq = T.tsum(Z * Z, axis=-1) / (2.0 * math.sqrt(Z.shape[-1]))
    logw = T.log_softmax(T.where(mask, sq, MASK_LOGIT), axis=-1)
    return DiscreteMixture(T.where(mask, T.exp(logw), 0.0), Z, log_weights=logw, mask=mask)


class SelfAttention(Module):
    def __init__(self, dim: int, rng: NoiseSource):
        self.wq = Linear(dim, dim, rng, bias=False)
        self.wk = Linear(dim, dim, rng, bias=False)
        self.wv = Linear(dim, dim, rng, bias=False)
        self.wo = Linear(dim, dim, rng)

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        return self.wo(_masked_softmax_attend(self.wq(x), self.wk(x), self.wv(x), mask))


class CrossAttention(Module):
    def __init__(self, dim: int, rng: NoiseSource):
        self.wq = Linear(dim, dim, rng, bias=False)
        self.wk = Linear(dim, dim, rng, bias=False)
        self.wv = Linear(dim, dim, rng, bias=False)
        self.wo = Linear(dim, dim, rng)

    def __call__(self, x: Tensor, latent: Latent) -> Tensor:
        u = T.matmul(self.wq(x), T.transpose(self.wk.weight))
        return self.wo(self.wv(latent.attend(u)))


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: NoiseSource):
        self.l1 = Linear(dim, hidden, rng)
        self.l2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(T.relu(self.l1(x)))


class EncoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng: NoiseSource):
        self.attn = SelfAttention(cfg.model_dim, rng)
        self.ln1 = LayerNorm(cfg.model_dim)
        self.ff = FeedForward(cfg.model_dim, cfg.ff_dim, rng)
        self.ln2 = LayerNorm(cfg.model_dim)
        self.rate = cfg.dropout

    def __call__(self, x, mask, noise):
        x = self.ln1(x + dropout(self.attn(x, mask), self.rate, noise, self.training))
        return self.ln2(x + dropout(self.ff(x), self.rate, noise, self.training))


class DecoderLayer(Module):
    """Causal self-attention, optional cross-attention, feed-forward; post-norm."""

    def __init__(self, cfg: ModelConfig, rng: NoiseSource, cross: bool = True):
        self.attn = SelfAttention(cfg.model_dim, rng)
        self.ln1 = LayerNorm(cfg.model_dim)
        self.cross = CrossAttention(cfg.model_dim, rng) if cross else None
        self.ln_c = LayerNorm(cfg.model_dim) if cross else None
        self.ff = FeedForward(cfg.model_dim, cfg.ff_dim, rng)
        self.ln2 = LayerNorm(cfg.model_dim)
        self.rate = cfg.dropout

    def __call__(self, x, mask, noise, latent: Latent | None = None):
        x = self.ln1(x + dropout(self.attn(x, mask), self.rate, noise, self.training))
        if self.cross is not None:
            x = self.ln_c(x + dropout(self.cross(x, latent), self.rate, noise, self.training))
        return self.ln2(x + dropout(self.ff(x), self.rate, noise, self.training))


class GaussianHead(Module):
    """Per-vector Gaussian bottleneck used by the VT baselines."""

    def __init__(self, dim: int, rng: NoiseSource):
        self.mu = Linear(dim, dim, rng)
        self.log_sigma = Linear(dim, dim, rng, scale=0.01)

    def __call__(self, h: Tensor, mask: np.ndarray, noise, training: bool):
        mu = self.mu(h)
        log_sig = T.clip(self.log_sigma(h), -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND)
        z = mu + T.exp(log_sig) * noise.normal(mu.shape) if training else mu
        per_vec = 0.5 * T.tsum(mu * mu + T.exp(2.0 * log_sig) - 1.0 - 2.0 * log_sig, axis=-1)
        return z, T.tsum(T.where(mask, per_vec, 0.0), axis=-1)


def _causal_mask(q: int, lengths=None) -> np.ndarray:
    return np.tril(np.ones((q, q), dtype=bool))[None]


class Seq2Seq(Module):
    """Encoder, variant latent, decoder and output projection."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = NoiseSource(seed)
        d = cfg.model_dim
        self.embed = Embedding(cfg.vocab_size, d, rng)
        self.encoder = EncoderLayer(cfg, rng)
        self.decoder = DecoderLayer(cfg, rng, cross=True)
        self.out = Linear(d, cfg.vocab_size, rng)
        self.nvib = NvibLayer(d, d, cfg.nvib, rng) if cfg.variant == "NVAE" else None
        self.vib = GaussianHead(d, rng) if cfg.variant in ("VT", "VTP", "VTS") else None
        self._pe = sinusoidal_positions(cfg.max_len + 1, d)

    # ---------------------------------------------------------------- pieces
    def _embed(self, ids: np.ndarray, noise) -> Tensor:
        if ids.shape[-1] > self.cfg.max_len:
            raise DomainError(f"sequence of length {ids.shape[-1]} exceeds max_len {self.cfg.max_len}")
        x = self.embed(ids) * math.sqrt(self.cfg.model_dim) + self._pe[: ids.shape[-1]]
        return dropout(x, self.cfg.dropout, noise, self.training)

    def encode(self, ids, lengths=None, noise=None) -> Tensor:
        """Encoder states (B, n, d) for padded ids (B, n)."""
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        if lengths is None:
            lengths = np.full(ids.shape[0], ids.shape[1])
        valid = np.arange(ids.shape[1])[None, :] < np.asarray(lengths)[:, None]
        return self.encoder(self._embed(ids, noise), valid[:, None, :], noise)

    def latent(self, h: Tensor, lengths, noise=None) -> Latent:
        """Variant-specific latent built on encoder states."""
        cfg = self.cfg
        lengths = np.asarray(lengths)
        B, m, d = h.shape
        valid = np.arange(m)[None, :] < lengths[:, None]
        if cfg.variant == "NVAE":
            post = self.nvib(h, lengths)
            if self.training:
                mix, kl = nvib_forward_train(post, noise, cfg.nvib)
                attend = lambda u: dattn_discrete(u, mix)
            else:
                attend, kl = nvib_forward_test(post), nvib_kl(post, cfg.nvib)
            return Latent(attend, kl, post, post.mask[..., :-1])
        if cfg.variant == "T":
            mix = impulse_latent(h, valid)
            return Latent(lambda u: dattn_discrete(u, mix), None, None, valid)
        if cfg.variant == "VTP":
            h, keep = self._pool(h, valid), np.ones((B, 1), dtype=bool)
        elif cfg.variant == "VTS":
            keep = valid & stride_keep(m, cfg.stride)[None, :]
        else:
            keep = valid
        z, kl_g = self.vib(h, keep, noise, self.training)
        lam_g = cfg.nvib.lambda_g_prime / (lengths * d)
        zero = T.constant(np.zeros(B))
        kl = KLBreakdown(l_d=zero, l_g=kl_g, weighted=kl_g * lam_g)
        mix = impulse_latent(z, keep)
        return Latent(lambda u: dattn_discrete(u, mix), kl, None, keep)

    def _pool(self, h: Tensor, valid: np.ndarray) -> Tensor:
        mode = self.cfg.pooling
        if mode == "cls":
            return T.getitem(h, (slice(None), slice(0, 1)))
        v = valid[..., None]
        if mode == "mean":
            return T.tsum(T.where(v, h, 0.0), axis=1, keepdims=True) / valid.sum(axis=1)[:, None, None]
        return T.tmax(T.where(v, h, MASK_LOGIT), axis=1, keepdims=True)

    def decode_logits(self, dec_ids, latent: Latent, noise=None) -> Tensor:
        dec_ids = np.atleast_2d(np.asarray(dec_ids, dtype=np.int64))
        x = self._embed(dec_ids, noise)
        return self.out(self.decoder(x, _causal_mask(dec_ids.shape[1]), noise, latent))

    # ---------------------------------------------------------------- objective
    def loss(self, ids, lengths, noise=None) -> LossRecord:
        """Teacher-forced reconstruction of ids plus the variant's weighted KL."""
        ids = np.asarray(ids, dtype=np.int64)
        lengths = np.asarray(lengths)
        if np.any(lengths < 2):
            raise DomainError("sequences need begin and end markers")
        h = self.encode(ids, lengths, noise)
        lat = self.latent(h, lengths, noise)
        logits = self.decode_logits(ids[:, :-1], lat, noise)
        l_r = token_nll(logits, ids[:, 1:], lengths - 1)
        if lat.kl is None:
            total, l_d, l_g = T.mean(l_r), 0.0, 0.0
        else:
            total = T.mean(l_r + lat.kl.weighted)
            l_d, l_g = float(np.mean(lat.kl.l_d.data)), float(np.mean(lat.kl.l_g.data))
        nu = float(np.mean(retained_proportion(lat.post))) if lat.post is not None else \
            float(np.mean(lat.retained.sum(axis=1) / lengths))
        return LossRecord(l_r=float(np.mean(l_r.data)), l_d=l_d, l_g=l_g, total=total, nu=nu)


def token_nll(logits: Tensor, targets: np.ndarray, counts: np.ndarray) -> Tensor:
    """Per-sentence mean cross-entropy over the first ``counts[b]`` positions."""
    B, q, _ = logits.shape
    logp = T.log_softmax(logits, axis=-1)
    picked = T.getitem(logp, (np.arange(B)[:, None], np.arange(q)[None, :], targets))
    valid = np.arange(q)[None, :] < counts[:, None]
    return -T.tsum(T.where(valid, picked, 0.0), axis=-1) / counts


def decode_greedy(model: Seq2Seq, latent: Latent, target_lengths) -> list[list[int]]:
    """Argmax decoding from BOS; each row stops at EOS or after 2n tokens.

    Returned rows contain the emitted tokens, including a final EOS when
    one was produced.
    """
    caps = 2 * np.asarray(target_lengths, dtype=np.int64)
    B = len(caps)
    prefix = np.full((B, 1), BOS, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    out = [[] for _ in range(B)]
    for step in range(int(caps.max())):
        if step + 1 > model.cfg.max_len:
            break
        logits = model.decode_logits(prefix, latent).data[:, -1, :]
        nxt = logits.argmax(axis=-1)
        for b in range(B):
            if not done[b]:
                out[b].append(int(nxt[b]))
                done[b] = nxt[b] == EOS or len(out[b]) >= caps[b]
        if done.all():
            break
        prefix = np.concatenate([prefix, np.where(done, PAD, nxt)[:, None]], axis=1)
    return out


def reconstruct(model: Seq2Seq, seqs) -> list[list[int]]:
    """Greedy reconstruction in eval mode; target length is the input length."""
    was = model.training
    model.eval()
    try:
        ids, lengths = pad_batch(seqs)
        lat = model.latent(model.encode(ids, lengths), lengths)
        return decode_greedy(model, lat, lengths)
    finally:
        model.train(was)


def prior_latent(model: Seq2Seq, lengths, noise: NoiseSource) -> Latent:
    """Latent drawn from the prior for sentences of the given lengths.

    NVAE: n standard-normal vectors with Dirichlet weights, each with
    pseudo-count alpha0_p' / n where alpha0_p' = alpha0_p + n * delta_p.
    Gaussian baselines: standard-normal vectors at the retained slots.
    """
    from .config import UnsupportedVariantError

    cfg = model.cfg
    lengths = np.asarray(lengths, dtype=np.int64)
    B, m, d = len(lengths), int(lengths.max()), cfg.model_dim
    valid = np.arange(m)[None, :] < lengths[:, None]
    if cfg.variant == "T":
        raise UnsupportedVariantError("the plain Transformer has no prior to generate from")
    if cfg.variant == "NVAE":
        a0 = cfg.nvib.alpha0_p + lengths * cfg.nvib.delta_p
        per = np.broadcast_to((a0 / lengths)[:, None], (B, m))
        gam = np.where(valid, noise.exact_gamma(per), 0.0)
        w = gam / gam.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            logw = np.where(valid, np.log(w), MASK_LOGIT)
        z = T.constant(noise.normal((B, m, d)))
        mix = DiscreteMixture(T.constant(w), z, log_weights=T.constant(logw), mask=valid)
        return Latent(lambda u: dattn_discrete(u, mix), retained=valid)
    if cfg.variant == "VTP":
        keep = np.ones((B, 1), dtype=bool)
        z = T.constant(noise.normal((B, 1, d)))
    else:
        keep = valid & stride_keep(m, cfg.stride)[None, :] if cfg.variant == "VTS" else valid
        z = T.constant(noise.normal((B, m, d)))
    mix = impulse_latent(z, keep)
    return Latent(lambda u: dattn_discrete(u, mix), retained=keep)


def sample_lengths(length_probs: dict, count: int, noise: NoiseSource) -> np.ndarray:
    keys = np.array(sorted(length_probs), dtype=np.int64)
    p = np.array([length_probs[k] for k in keys], dtype=np.float64)
    return keys[noise.choice(len(keys), p=p / p.sum(), shape=count)]


def generate_from_prior(model: Seq2Seq, length_probs: dict, noise: NoiseSource, count: int = 1,
                        batch_size: int = 64) -> list[list[int]]:
    """Sample lengths from the histogram, draw prior latents and decode greedily."""
    was = model.training
    model.eval()
    try:
        ns = sample_lengths(length_probs, count, noise)
        out = []
        for s in range(0, count, batch_size):
            chunk = ns[s: s + batch_size]
            out.extend(decode_greedy(model, prior_latent(model, chunk, noise), chunk))
        return out
    finally:
        model.train(was)


__all__ = [
    "Seq2Seq", "LossRecord", "Latent", "pad_batch", "stride_keep", "impulse_latent", "token_nll",
    "decode_greedy", "reconstruct", "prior_latent", "generate_from_prior", "sample_lengths",
]
