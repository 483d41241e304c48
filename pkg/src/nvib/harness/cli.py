"""Command-line entry point ``nvib``.

Exit codes: 0 success, 1 a check or metric failed, 2 bad usage or input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..model import CheckpointError, UnsupportedVariantError
from ..numerics.special import DomainError
from .config import RunConfig, default_out_dir, load_config
from .data import InputError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=["T", "VT", "VTP", "VTS", "NVAE"])
    p.add_argument("--lambda-d", type=float, dest="lambda_d_prime")
    p.add_argument("--lambda-g", type=float, dest="lambda_g_prime")
    p.add_argument("--delta-p", type=float, dest="delta_p")
    p.add_argument("--data", help="text file with one sentence per line, or 'synthetic'")
    p.add_argument("--out", help="output directory (default: $NVIB_OUT or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nvib", description="Nonparametric variational information bottleneck toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write metrics, evaluation and a checkpoint")
    _common(p)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the validation split")
    _common(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("generate", help="sample sentences from the prior of a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=10)

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--suite", default="all")
    p.add_argument("--list", action="store_true", help="list the checks of the suite and exit")

    p = sub.add_parser("plot", help="write figure CSVs and SVGs")
    p.add_argument("figure", choices=["fig3", "loss", "nu"])
    p.add_argument("--metrics", help="metrics.csv of a training run (for 'loss')")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint to measure nu by length (for 'nu')")
    return parser


def _run_config(args) -> RunConfig:
    keys = ("seed", "variant", "lambda_d_prime", "lambda_g_prime", "delta_p", "data", "steps")
    overrides = {k: getattr(args, k, None) for k in keys}
    return load_config(args.config, overrides)


def _out(args) -> Path:
    return Path(args.out) if getattr(args, "out", None) else default_out_dir()


def _fmt(stats: dict) -> str:
    return "\n".join(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}" for k, v in sorted(stats.items()))


def cmd_train(args) -> int:
    from .runs import run_train

    cfg = _run_config(args)
    out = _out(args)
    summary = run_train(cfg, out, log=lambda e: print(
        f"step {e.step:6d}  l_r {e.l_r:.4f}  l_d {e.l_d:.4f}  l_g {e.l_g:.4f}  nu {e.nu:.3f}", flush=True))
    print(_fmt(summary))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .runs import run_eval

    print(_fmt(run_eval(args.checkpoint, _run_config(args))))
    return EXIT_OK


def cmd_generate(args) -> int:
    from .runs import run_generate

    cfg = _run_config(args)
    sents, vocab = run_generate(args.checkpoint, args.count, seed=cfg.seed)
    lines = [" ".join(vocab[i] for i in s[1:-1]) for s in sents]
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "generated.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import checks_for, run_suite

    try:
        ids = checks_for(args.suite)
    except ValueError as e:
        raise InputError(str(e)) from None
    if args.list:
        print("\n".join(ids))
        return EXIT_OK
    results = run_suite(args.suite, echo=print)
    failed = [r.id for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_plot(args) -> int:
    from . import plots

    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.figure == "fig3":
        paths = plots.plot_fig3(out)
    elif args.figure == "loss":
        if not args.metrics:
            raise InputError("plot loss needs --metrics")
        paths = plots.plot_loss_curves(args.metrics, out)
    else:
        if not args.checkpoint:
            raise InputError("plot nu needs --checkpoint")
        from ..model import load_checkpoint
        from ..model.train import retained_by_sentence
        from .runs import load_corpora

        model, _ = load_checkpoint(args.checkpoint)
        _, valid = load_corpora(_run_config(args))
        lengths, nus = retained_by_sentence(model, valid.sentences)
        paths = plots.plot_nu_vs_length(lengths, nus, out)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "generate": cmd_generate, "verify": cmd_verify,
            "plot": cmd_plot}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"nvib: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, CheckpointError, UnsupportedVariantError, DomainError) as e:
        print(f"nvib: error: {e}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
