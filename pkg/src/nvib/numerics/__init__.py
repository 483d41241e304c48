"""Tensors, reverse-mode tape, special functions and noise."""

from .noise import NoiseSource
from .special import DomainError, digamma, log_gamma, trigamma
from .tensor import (
    ContractError,
    DimensionError,
    Gradients,
    NonFiniteError,
    Parameter,
    Tape,
    Tensor,
    as_tensor,
    backward,
    checked,
    constant,
    matmul,
    precision,
    set_default_dtype,
    softmax,
)

__all__ = [
    "NoiseSource", "DomainError", "digamma", "log_gamma", "trigamma",
    "ContractError", "DimensionError", "Gradients", "NonFiniteError", "Parameter",
    "Tape", "Tensor", "as_tensor", "backward", "checked", "constant", "matmul",
    "precision", "set_default_dtype", "softmax",
]
