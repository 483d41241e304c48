"""Retained proportion for lambda_D' = 1 and several lambda_G' values, over seeds.

    python scripts/nu_sweep.py --lambda-g 0.01 0.1 --seeds 0 1 2
"""

import argparse

import numpy as np

from nvib.harness.config import RunConfig
from nvib.harness.runs import fit
from nvib.model import evaluate_loss


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda-d", type=float, default=1.0)
    ap.add_argument("--lambda-g", type=float, nargs="+", default=[0.01, 0.1])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--conditional", action="store_true", help="KL against alpha0_p + n delta_p")
    args = ap.parse_args()
    for lg in args.lambda_g:
        nus = []
        for s in args.seeds:
            cfg = RunConfig(lambda_d_prime=args.lambda_d, lambda_g_prime=lg, seed=s, steps=args.steps,
                            conditional_prior=args.conditional)
            model, train_c, _, _ = fit(cfg)
            stats = evaluate_loss(model, train_c.sentences)
            nus.append(stats["nu"])
            print(f"lambda_G' {lg}  seed {s}  nu {stats['nu']:.4f}  accuracy {stats['accuracy']:.4f}", flush=True)
        print(f"lambda_G' {lg}  mean nu {np.mean(nus):.4f}")


if __name__ == "__main__":
    main()
