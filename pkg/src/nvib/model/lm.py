"""Decoder-only language model used as the external scorer for F-PPL and R-PPL."""

from __future__ import annotations

import math

import numpy as np

from ..nn import Adam, Embedding, Linear, Module, dropout, sinusoidal_positions
from ..numerics import tensor as T
from ..numerics.noise import NoiseSource
from ..numerics.special import DomainError
from ..numerics.tensor import Tape, Tensor
from .config import ModelConfig
from .train import batches
from .transformer import DecoderLayer, _causal_mask, pad_batch, token_nll


class LanguageModel(Module):
    """Same toy block as the seq2seq decoder, without cross-attention."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = NoiseSource(seed)
        self.embed = Embedding(cfg.vocab_size, cfg.model_dim, rng)
        self.block = DecoderLayer(cfg, rng, cross=False)
        self.out = Linear(cfg.model_dim, cfg.vocab_size, rng)
        self._pe = sinusoidal_positions(cfg.max_len + 1, cfg.model_dim)
        self.trained = False

    def logits(self, ids, noise=None) -> Tensor:
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        if ids.shape[1] > self.cfg.max_len:
            raise DomainError(f"sequence of length {ids.shape[1]} exceeds max_len {self.cfg.max_len}")
        x = self.embed(ids) * math.sqrt(self.cfg.model_dim) + self._pe[: ids.shape[1]]
        x = dropout(x, self.cfg.dropout, noise, self.training)
        return self.out(self.block(x, _causal_mask(ids.shape[1]), noise))

    def sentence_nll(self, ids, lengths, noise=None) -> Tensor:
        """Per-sentence mean next-token NLL; the first token (BOS) is given."""
        ids = np.asarray(ids, dtype=np.int64)
        lengths = np.asarray(lengths)
        return token_nll(self.logits(ids[:, :-1], noise), ids[:, 1:], lengths - 1)

    def token_nll_sum(self, ids, lengths) -> tuple[float, int]:
        """Summed NLL and token count over a padded batch (eval, no tape)."""
        per = self.sentence_nll(ids, lengths).data
        counts = np.asarray(lengths) - 1
        return float(np.sum(per * counts)), int(counts.sum())


class UniformLM:
    """Assigns 1/|V| to every token; its perplexity is |V|."""

    trained = True

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def token_nll_sum(self, ids, lengths) -> tuple[float, int]:
        n = int(np.sum(np.asarray(lengths) - 1))
        return n * math.log(self.vocab_size), n


def train_lm(lm: LanguageModel, seqs: list, steps: int, batch_size: int = 16, lr: float = 1e-3,
             seed: int = 0, clip_norm: float | None = 1.0) -> list[float]:
    """Fit the LM by Adam on next-token NLL; returns the per-step losses."""
    root = NoiseSource(seed)
    order, drop = root.spawn(1), root.spawn(2)
    opt = Adam(lm.parameters(), lr=lr, clip_norm=clip_norm)
    it = batches(len(seqs), batch_size, order)
    losses = []
    lm.train()
    for _ in range(steps):
        ids, lengths = pad_batch([seqs[i] for i in next(it)])
        with Tape() as tape:
            loss = T.mean(lm.sentence_nll(ids, lengths, drop))
        opt.step(tape.backward(loss))
        losses.append(float(loss.data))
    lm.eval()
    lm.trained = True
    return losses


__all__ = ["LanguageModel", "UniformLM", "train_lm"]
