"""BLEU, perplexity, forward/reverse perplexity and the metrics record."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from ..model.config import BOS, EOS, PAD, ModelConfig
from ..model.lm import LanguageModel, train_lm
from ..model.transformer import pad_batch
from ..numerics.tensor import ContractError
from .data import InputError


@dataclass
class MetricsRecord:
    bleu: float | None = None
    ppl: float | None = None
    f_ppl: float | None = None
    r_ppl: float | None = None
    nu: float | None = None
    losses: list = field(default_factory=list)

    def __post_init__(self):
        if self.ppl is not None and self.ppl < 1.0 - 1e-12:
            raise ContractError("perplexity below 1")
        if self.nu is not None and not 0.0 <= self.nu <= 1.0:
            raise ContractError("retained proportion outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def strip_markers(ids) -> list:
    return [int(t) for t in ids if t not in (BOS, EOS, PAD)]


def bleu_stats(candidates, references, max_n: int = 4):
    """Corpus totals: clipped matches and candidate counts per order, and the two lengths."""
    if len(candidates) != len(references):
        raise InputError("candidate and reference counts differ")
    if not candidates:
        raise InputError("BLEU needs at least one sentence pair")
    matches, totals = [0] * max_n, [0] * max_n
    c_len = r_len = 0
    for cand, ref in zip(candidates, references):
        cand, ref = list(cand), list(ref)
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, max_n + 1):
            cn, rn = _ngrams(cand, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, rn[g]) for g, c in cn.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    return matches, totals, c_len, r_len


def bleu(candidates, references, max_n: int = 4) -> float:
    """Corpus BLEU-4 in [0, 100].

    Unigram precision is unsmoothed; orders 2..4 use add-one smoothing
    (m + 1) / (c + 1). Brevity penalty exp(1 - r/c) when c < r.
    """
    matches, totals, c, r = bleu_stats(candidates, references, max_n)
    if c == 0 or matches[0] == 0:
        return 0.0
    logp = math.log(matches[0] / totals[0])
    for n in range(1, max_n):
        logp += math.log((matches[n] + 1) / (totals[n] + 1))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(logp / max_n)


def perplexity(lm, sentences, batch_size: int = 64) -> float:
    """exp of the mean next-token NLL over all predicted tokens (end marker included)."""
    if not getattr(lm, "trained", False):
        raise ContractError("language model has not been trained")
    if not sentences:
        raise InputError("no sentences to score")
    nll = count = 0
    for s in range(0, len(sentences), batch_size):
        ids, lengths = pad_batch(sentences[s: s + batch_size])
        a, b = lm.token_nll_sum(ids, lengths)
        nll += a
        count += b
    return math.exp(nll / count)


def fit_lm(sentences, vocab_size: int, steps: int = 2000, seed: int = 0, model_dim: int = 32,
           ff_dim: int = 64, max_len: int = 64, dropout: float = 0.1) -> LanguageModel:
    """External LM: the toy decoder block in decoder-only mode."""
    cfg = ModelConfig(vocab_size=vocab_size, model_dim=model_dim, ff_dim=ff_dim, max_len=max_len,
                      variant="T", dropout=dropout)
    lm = LanguageModel(cfg, seed=seed)
    train_lm(lm, list(sentences), steps=steps, seed=seed)
    return lm


def forward_ppl(lm, generated) -> float:
    """F-PPL: an LM fitted on real training data scores the generated text."""
    return perplexity(lm, generated)


def reverse_ppl(generated, valid, vocab_size: int, steps: int = 2000, seed: int = 0, **lm_kw) -> float:
    """R-PPL: an LM fitted on the generated text scores the real validation data."""
    return perplexity(fit_lm(generated, vocab_size, steps=steps, seed=seed, **lm_kw), valid)


def eval_fppl_rppl(generated, train_sents, valid_sents, vocab_size: int, steps: int = 2000, seed: int = 0,
                   train_lm_model=None) -> tuple[float, float]:
    lm = train_lm_model or fit_lm(train_sents, vocab_size, steps=steps, seed=seed)
    return forward_ppl(lm, generated), reverse_ppl(generated, valid_sents, vocab_size, steps=steps, seed=seed)


__all__ = ["MetricsRecord", "bleu", "bleu_stats", "strip_markers", "perplexity", "fit_lm", "forward_ppl",
           "reverse_ppl", "eval_fppl_rppl"]
