"""Training loop, evaluation helpers and the step log."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import Adam
from ..numerics.noise import NoiseSource
from ..numerics.tensor import Tape
from .transformer import Seq2Seq, pad_batch, reconstruct


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 16
    lr: float = 5e-4
    clip_norm: float = 0.1
    log_every: int = 50
    seed: int = 0


@dataclass
class StepLog:
    step: int
    l_r: float
    l_d: float
    l_g: float
    total: float
    nu: float


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    optimizer: Adam | None = None


def batches(n_items: int, batch_size: int, noise: NoiseSource):
    """Endless shuffled minibatch indices; reshuffles every epoch."""
    while True:
        order = noise.permutation(n_items)
        for s in range(0, n_items, batch_size):
            chunk = order[s: s + batch_size]
            if len(chunk) == batch_size or n_items < batch_size:
                yield chunk


def train_step(model: Seq2Seq, opt: Adam, ids, lengths, noise: NoiseSource):
    model.train()
    with Tape() as tape:
        rec = model.loss(ids, lengths, noise)
    grads = tape.backward(rec.total)
    opt.step(grads)
    return rec


def train(model: Seq2Seq, seqs: list, cfg: TrainConfig, callback=None) -> TrainResult:
    """Adam on teacher-forced loss; logs the mean of each window of ``log_every`` steps."""
    root = NoiseSource(cfg.seed)
    order_noise, model_noise = root.spawn(1), root.spawn(2)
    opt = Adam(model.parameters(), lr=cfg.lr, clip_norm=cfg.clip_norm)
    result = TrainResult(optimizer=opt)
    window = []
    it = batches(len(seqs), cfg.batch_size, order_noise)
    for step in range(1, cfg.steps + 1):
        ids, lengths = pad_batch([seqs[i] for i in next(it)])
        rec = train_step(model, opt, ids, lengths, model_noise)
        window.append((rec.l_r, rec.l_d, rec.l_g, rec.value, rec.nu))
        if step % cfg.log_every == 0 or step == cfg.steps:
            m = np.mean(window, axis=0)
            entry = StepLog(step, *map(float, m))
            result.log.append(entry)
            window = []
            if callback is not None:
                callback(entry)
    model.eval()
    return result


def evaluate_loss(model: Seq2Seq, seqs: list, batch_size: int = 64) -> dict:
    """Eval-mode loss parts, retained proportion and teacher-forced token accuracy."""
    was = model.training
    model.eval()
    tot = {"l_r": 0.0, "l_d": 0.0, "l_g": 0.0, "total": 0.0, "nu": 0.0}
    correct = count = 0
    try:
        for s in range(0, len(seqs), batch_size):
            chunk = seqs[s: s + batch_size]
            ids, lengths = pad_batch(chunk)
            rec = model.loss(ids, lengths)
            w = len(chunk)
            for k, v in (("l_r", rec.l_r), ("l_d", rec.l_d), ("l_g", rec.l_g), ("total", rec.value), ("nu", rec.nu)):
                tot[k] += v * w
            c, n = teacher_forced_hits(model, ids, lengths)
            correct += c
            count += n
    finally:
        model.train(was)
    out = {k: v / len(seqs) for k, v in tot.items()}
    out["accuracy"] = correct / count
    return out


def teacher_forced_hits(model: Seq2Seq, ids, lengths) -> tuple[int, int]:
    h = model.encode(ids, lengths)
    lat = model.latent(h, lengths)
    pred = model.decode_logits(ids[:, :-1], lat).data.argmax(axis=-1)
    tgt = ids[:, 1:]
    valid = np.arange(tgt.shape[1])[None, :] < (np.asarray(lengths) - 1)[:, None]
    return int(((pred == tgt) & valid).sum()), int(valid.sum())


def retained_by_sentence(model: Seq2Seq, seqs: list, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode (lengths, retained proportion) per sentence; lengths count the markers."""
    was = model.training
    model.eval()
    lengths, nus = [], []
    try:
        for s in range(0, len(seqs), batch_size):
            ids, lens = pad_batch(seqs[s: s + batch_size])
            lat = model.latent(model.encode(ids, lens), lens)
            lengths.extend(lens)
            nus.extend(lat.retained.sum(axis=1) / lens)
    finally:
        model.train(was)
    return np.asarray(lengths), np.asarray(nus, dtype=np.float64)


def reconstruct_all(model: Seq2Seq, seqs: list, batch_size: int = 64) -> list:
    out = []
    for s in range(0, len(seqs), batch_size):
        out.extend(reconstruct(model, seqs[s: s + batch_size]))
    return out


__all__ = ["TrainConfig", "StepLog", "TrainResult", "train", "train_step", "evaluate_loss",
           "teacher_forced_hits", "reconstruct_all", "retained_by_sentence", "batches"]
