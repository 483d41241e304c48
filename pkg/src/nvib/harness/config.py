"""Run configuration: a flat ``key = value`` file, overridden by command-line flags."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from ..layer import NvibConfig
from ..model.config import ModelConfig
from ..model.train import TrainConfig
from .data import InputError

OUT_ENV = "NVIB_OUT"


@dataclass
class RunConfig:
    """Every knob of a train/eval run.

    ``data`` is a text file (one sentence per line) or ``synthetic`` for the
    built-in Markov-chain corpus. The chain is fixed by ``data_seed``, so runs
    with different ``seed`` values see the same sentences.
    ``min_tokens``/``max_tokens`` bound the sentence length in tokens, markers
    excluded.
    """

    variant: str = "NVAE"
    lambda_d_prime: float = 0.0
    lambda_g_prime: float = 0.0
    delta_p: float = 1.0
    alpha0_p: float = 1.0
    conditional_prior: bool = True
    seed: int = 0
    model_dim: int = 32
    ff_dim: int = 64
    max_len: int = 64
    dropout: float = 0.1
    pooling: str = "mean"
    stride: float = 0.5
    steps: int = 5000
    batch_size: int = 16
    lr: float = 5e-4
    clip_norm: float = 0.1
    log_every: int = 50
    data: str = "synthetic"
    data_seed: int = 0
    tokenizer: str = "whitespace"
    min_tokens: int = 5
    max_tokens: int = 20
    n_sentences: int = 512
    synth_vocab: int = 64
    n_valid: int = 64
    lm_steps: int = 2000
    n_generate: int = 1000

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size, model_dim=self.model_dim, ff_dim=self.ff_dim, max_len=self.max_len,
            variant=self.variant, pooling=self.pooling, stride=self.stride, dropout=self.dropout,
            nvib=NvibConfig(self.lambda_d_prime, self.lambda_g_prime, self.delta_p, self.alpha0_p,
                            self.conditional_prior),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size, lr=self.lr, clip_norm=self.clip_norm,
                           log_every=self.log_every, seed=self.seed)

    def dump(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise InputError(f"config key {key!r}: cannot parse {raw!r} as bool")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise InputError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None
    return raw


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file {p} not found")
        values.update(parse_config_text(p.read_text(encoding="utf-8")))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _coerce(k, str(v)) if isinstance(v, str) else v
    return RunConfig(**values)


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


__all__ = ["RunConfig", "parse_config_text", "load_config", "default_out_dir", "OUT_ENV"]
