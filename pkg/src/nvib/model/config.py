"""Model configuration and token conventions."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..layer import NvibConfig
from ..numerics.special import DomainError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")

VARIANTS = ("T", "VT", "VTP", "VTS", "NVAE")
POOLING = ("mean", "max", "cls")


class UnsupportedVariantError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Single-layer, single-head encoder-decoder.

    ``variant`` picks the latent: T (none), VT (Gaussian per vector), VTP
    (one pooled Gaussian vector), VTS (Gaussian per vector with a stride
    mask) or NVAE (the NVIB layer). Lengths count the begin and end
    markers. The full-size reference setting is d = 256, ff = 1024.
    """

    vocab_size: int
    model_dim: int = 32
    ff_dim: int = 64
    max_len: int = 64
    variant: str = "NVAE"
    pooling: str = "mean"
    stride: float = 0.5
    dropout: float = 0.1
    nvib: NvibConfig = field(default_factory=NvibConfig)

    def __post_init__(self):
        if isinstance(self.nvib, dict):
            self.nvib = NvibConfig(**self.nvib)
        if self.variant not in VARIANTS:
            raise UnsupportedVariantError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.pooling not in POOLING:
            raise UnsupportedVariantError(f"unknown pooling {self.pooling!r}")
        if self.model_dim < 4 or self.model_dim % 2:
            raise DomainError("model_dim must be even and >= 4")
        if not 0.0 < self.stride < 1.0:
            raise DomainError("stride must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise DomainError("dropout must lie in [0, 1)")
        if self.vocab_size <= len(SPECIALS):
            raise DomainError("vocabulary must contain ordinary tokens")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
