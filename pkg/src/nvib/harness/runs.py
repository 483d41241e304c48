"""End-to-end operations shared by the CLI, the scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..model import (Seq2Seq, evaluate_loss, generate_from_prior, load_checkpoint, reconstruct_all,
                     save_checkpoint, train)
from ..model.train import StepLog
from ..numerics.noise import NoiseSource
from .config import RunConfig
from .data import Corpus, ingest, random_strings, synthetic_corpus
from .metrics import bleu, fit_lm, perplexity, strip_markers
from .plots import write_csv

METRIC_COLUMNS = ("step", "l_r", "l_d", "l_g", "total", "nu")


def load_corpora(cfg: RunConfig) -> tuple[Corpus, Corpus]:
    """(train, valid). Synthetic data draws the validation split from the same chain."""
    if cfg.data == "synthetic":
        kw = dict(vocab_size=cfg.synth_vocab, min_len=cfg.min_tokens, max_len=cfg.max_tokens, seed=cfg.data_seed)
        return (synthetic_corpus(cfg.n_sentences, sample_key=0, **kw),
                synthetic_corpus(cfg.n_valid, sample_key=1, **kw))
    full = ingest(cfg.data, cfg.tokenizer, (cfg.min_tokens, cfg.max_tokens))
    return full.split(min(cfg.n_valid, len(full.sentences) // 5 or 1))


def reconstruction_bleu(model: Seq2Seq, sents: list) -> float:
    outs = reconstruct_all(model, sents)
    return bleu([strip_markers(o) for o in outs], [strip_markers(s) for s in sents])


def evaluate(model: Seq2Seq, corpus: Corpus) -> dict:
    stats = evaluate_loss(model, corpus.sentences)
    stats["bleu"] = reconstruction_bleu(model, corpus.sentences)
    stats["ppl"] = float(np.exp(stats["l_r"]))
    return stats


def fit(cfg: RunConfig, log=None):
    """Train in memory; returns (model, train corpus, valid corpus, TrainResult)."""
    train_c, valid_c = load_corpora(cfg)
    model = Seq2Seq(cfg.model_config(train_c.vocab_size), seed=cfg.seed)
    return model, train_c, valid_c, train(model, train_c.sentences, cfg.train_config(), callback=log)


def run_train(cfg: RunConfig, out_dir, log=None) -> dict:
    """Train, then write metrics.csv, eval.csv, config.txt and model.ckpt into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, train_c, valid_c, result = fit(cfg, log)
    write_csv(out / "metrics.csv", METRIC_COLUMNS, [tuple(asdict(e).values()) for e in result.log])
    summary = {"train_" + k: v for k, v in evaluate(model, train_c).items()}
    summary.update({"valid_" + k: v for k, v in evaluate(model, valid_c).items()})
    write_csv(out / "eval.csv", ("metric", "value"), sorted(summary.items()))
    (out / "config.txt").write_text(cfg.dump(), encoding="utf-8")
    save_checkpoint(out / "model.ckpt", model, seed=cfg.seed, vocab=train_c.vocab,
                    extra={"length_probs": {str(k): v for k, v in train_c.length_probs().items()}})
    return summary


def run_eval(checkpoint, cfg: RunConfig) -> dict:
    model, _ = load_checkpoint(checkpoint)
    _, valid_c = load_corpora(cfg)
    return evaluate(model, valid_c)


def run_generate(checkpoint, count: int, seed: int = 0):
    """Sample sentences from the prior; returns (id lists with markers, vocab)."""
    model, header = load_checkpoint(checkpoint)
    probs = {int(k): v for k, v in header["extra"]["length_probs"].items()}
    outs = generate_from_prior(model, probs, NoiseSource(seed), count=count)
    from ..model.config import BOS, EOS

    return [np.array([BOS] + strip_markers(o) + [EOS], dtype=np.int64) for o in outs], header["vocab"]


def generation_fppl(model: Seq2Seq, train_c: Corpus, count: int = 1000, seed: int = 0, lm_steps: int = 2000,
                    lm=None) -> dict:
    """F-PPL of prior samples and of uniform random strings of the same lengths, under one external LM."""
    from ..model.config import BOS, EOS

    lm = lm or fit_lm(train_c.sentences, train_c.vocab_size, steps=lm_steps, seed=seed)
    outs = generate_from_prior(model, train_c.length_probs(), NoiseSource(seed), count=count)
    gen = [np.array([BOS] + strip_markers(o) + [EOS], dtype=np.int64) for o in outs]
    rand = random_strings([len(g) for g in gen], train_c.vocab_size, NoiseSource(seed).spawn(7))
    return {"f_ppl": perplexity(lm, gen), "random_f_ppl": perplexity(lm, rand),
            "data_f_ppl": perplexity(lm, train_c.sentences), "generated": gen}


def read_log(path) -> list[StepLog]:
    from .plots import read_csv

    header, rows = read_csv(path)
    return [StepLog(int(r[0]), *map(float, r[1:])) for r in rows]


__all__ = ["load_corpora", "fit", "evaluate", "reconstruction_bleu", "run_train", "run_eval", "run_generate",
           "generation_fppl", "read_log", "METRIC_COLUMNS"]
