"""Toy Transformer encoder-decoder, its VIB variants and the external language model."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import BOS, EOS, PAD, UNK, ModelConfig, UnsupportedVariantError
from .lm import LanguageModel, UniformLM, train_lm
from .train import StepLog, TrainConfig, evaluate_loss, reconstruct_all, train
from .transformer import (LossRecord, Seq2Seq, decode_greedy, generate_from_prior, pad_batch, prior_latent,
                          reconstruct, stride_keep)
