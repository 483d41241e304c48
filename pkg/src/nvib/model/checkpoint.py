"""Versioned binary checkpoints.

Layout: the 8-byte magic ``NVIBCKPT``, a little-endian uint32 format
version, a uint32 header length, a UTF-8 JSON header (config echo, seed,
vocabulary, parameter names and shapes), then each parameter as float64
little-endian values in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig

MAGIC = b"NVIBCKPT"
VERSION = 1
_HEAD = struct.Struct("<8sII")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model, seed: int = 0, vocab: list | None = None, extra: dict | None = None) -> Path:
    from .lm import LanguageModel

    path = Path(path)
    params = list(model.named_parameters())
    header = {
        "version": VERSION,
        "kind": "lm" if isinstance(model, LanguageModel) else "seq2seq",
        "config": model.cfg.to_dict(),
        "seed": int(seed),
        "vocab": list(vocab) if vocab is not None else None,
        "params": [{"name": n, "shape": list(p.shape)} for n, p in params],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEAD.pack(MAGIC, VERSION, len(blob)))
        f.write(blob)
        for _, p in params:
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return path


def read_header(path) -> dict:
    with open(path, "rb") as f:
        return _read_header(f)


def _read_header(f) -> dict:
    raw = f.read(_HEAD.size)
    if len(raw) < _HEAD.size:
        raise CheckpointError("file too short to be a checkpoint")
    magic, version, n = _HEAD.unpack(raw)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if version > VERSION:
        raise CheckpointError(f"checkpoint version {version} is newer than supported {VERSION}")
    header = json.loads(f.read(n).decode("utf-8"))
    header["version"] = version
    return header


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, header)."""
    from .lm import LanguageModel
    from .transformer import Seq2Seq

    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no checkpoint at {path}")
    with open(path, "rb") as f:
        header = _read_header(f)
        cfg = ModelConfig.from_dict(header["config"])
        cls = LanguageModel if header.get("kind") == "lm" else Seq2Seq
        model = cls(cfg, seed=header.get("seed", 0))
        named = dict(model.named_parameters())
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * count)
            if len(buf) != 8 * count:
                raise CheckpointError(f"truncated payload for {spec['name']}")
            if spec["name"] not in named:
                raise CheckpointError(f"unknown parameter {spec['name']}")
            named[spec["name"]].assign(np.frombuffer(buf, dtype="<f8").reshape(shape))
        if set(named) != {s["name"] for s in header["params"]}:
            raise CheckpointError("checkpoint does not cover every parameter")
    if cls is LanguageModel:
        model.trained = True
    model.eval()
    return model, header


__all__ = ["save_checkpoint", "load_checkpoint", "read_header", "CheckpointError", "MAGIC", "VERSION"]
