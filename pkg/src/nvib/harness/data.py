"""Corpora: text ingestion, tokenization, vocabularies and the synthetic toy set."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model.config import BOS, EOS, SPECIALS, UNK
from ..numerics.noise import NoiseSource


class InputError(ValueError):
    """Bad user input: unreadable data, empty corpus, malformed config."""


def tokenize(line: str, mode: str) -> list[str]:
    if mode == "char":
        return list(line)
    if mode == "whitespace":
        return line.split()
    raise InputError(f"unknown tokenizer mode {mode!r}")


@dataclass
class Corpus:
    """Sentences as id arrays wrapped in begin/end markers, plus the vocabulary."""

    sentences: list
    vocab: list
    histogram: dict = field(default_factory=dict)

    def __post_init__(self):
        V = len(self.vocab)
        for s in self.sentences:
            if len(s) < 2 or s[0] != BOS or s[-1] != EOS or np.any((s < 0) | (s >= V)):
                raise InputError("sentence ids out of range or missing markers")
        if not self.histogram:
            self.histogram = dict(sorted(Counter(len(s) for s in self.sentences).items()))

    @property
    def token_to_id(self) -> dict:
        return {t: i for i, t in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def length_probs(self) -> dict:
        total = sum(self.histogram.values())
        return {n: c / total for n, c in self.histogram.items()}

    def split(self, n_valid: int) -> tuple["Corpus", "Corpus"]:
        """Last ``n_valid`` sentences become the validation split."""
        if not 0 < n_valid < len(self.sentences):
            raise InputError("validation size must leave both splits non-empty")
        return (Corpus(self.sentences[:-n_valid], self.vocab), Corpus(self.sentences[-n_valid:], self.vocab))

    def encode(self, tokens: list) -> np.ndarray:
        lookup = self.token_to_id
        return np.array([BOS] + [lookup.get(t, UNK) for t in tokens] + [EOS], dtype=np.int64)

    def decode(self, ids) -> list:
        return [self.vocab[i] for i in ids if i not in (BOS, EOS) and i != 0]

    def with_sentences(self, sentences: list) -> "Corpus":
        return Corpus(list(sentences), self.vocab)


def build_vocab(token_lists) -> list:
    """Specials first, then tokens by descending frequency, ties broken lexicographically."""
    counts = Counter(t for toks in token_lists for t in toks)
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return list(SPECIALS) + [t for t in ordered if t not in SPECIALS]


def ingest(path, tokenizer_mode: str = "whitespace", length_bounds=(1, 100), vocab: list | None = None) -> Corpus:
    """Read one sentence per line, keep those whose token count lies within the bounds."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from None
    lo, hi = length_bounds
    token_lists = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        toks = tokenize(line, tokenizer_mode)
        if lo <= len(toks) <= hi:
            token_lists.append(toks)
    if not token_lists:
        raise InputError(f"no sentences in {path} within length bounds {length_bounds}")
    vocab = vocab or build_vocab(token_lists)
    lookup = {t: i for i, t in enumerate(vocab)}
    sents = [np.array([BOS] + [lookup.get(t, UNK) for t in toks] + [EOS], dtype=np.int64) for toks in token_lists]
    return Corpus(sents, vocab)


def synthetic_corpus(n_sentences: int = 512, vocab_size: int = 64, min_len: int = 5, max_len: int = 20,
                     branching: int = 3, seed: int = 0, sample_key: int = 0) -> Corpus:
    """Sentences from a sparse random Markov chain over the ordinary tokens.

    Each token has ``branching`` successors with Dirichlet(1) transition
    probabilities; starting tokens are uniform and lengths are uniform on
    [min_len, max_len] (markers not counted). The chain depends on ``seed``
    only; ``sample_key`` selects an independent stream of sentences from the
    same chain, which is how held-out splits are drawn.
    """
    chain = NoiseSource(seed)
    n_tok = vocab_size - len(SPECIALS)
    if n_tok < branching:
        raise InputError("vocabulary too small for the requested branching")
    succ = np.stack([chain.permutation(n_tok)[:branching] for _ in range(n_tok)])
    probs = chain.exact_gamma(np.ones((n_tok, branching)))
    rng = chain.spawn(sample_key)
    probs /= probs.sum(axis=1, keepdims=True)
    vocab = list(SPECIALS) + [f"w{i:02d}" for i in range(n_tok)]
    sents = []
    for _ in range(n_sentences):
        L = int(rng.integers(min_len, max_len + 1))
        tok = int(rng.integers(0, n_tok))
        seq = [tok]
        for _ in range(L - 1):
            tok = int(succ[tok, rng.choice(branching, p=probs[tok])])
            seq.append(tok)
        sents.append(np.array([BOS] + [t + len(SPECIALS) for t in seq] + [EOS], dtype=np.int64))
    return Corpus(sents, vocab)


def write_corpus(corpus: Corpus, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(" ".join(corpus.decode(s)) for s in corpus.sentences) + "\n", encoding="utf-8")
    return path


def random_strings(lengths, vocab_size: int, noise: NoiseSource) -> list:
    """Uniform ordinary tokens with markers, one sequence per requested full length."""
    out = []
    for n in lengths:
        body = noise.integers(len(SPECIALS), vocab_size, shape=int(n) - 2)
        out.append(np.concatenate([[BOS], body, [EOS]]).astype(np.int64))
    return out


__all__ = ["InputError", "Corpus", "tokenize", "build_vocab", "ingest", "synthetic_corpus", "write_corpus",
           "random_strings"]
