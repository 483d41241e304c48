"""Sample from the prior of a regularized NVAE and compare F-PPL with random strings.

    python scripts/generation.py --steps 5000 --count 1000
"""

import argparse

from nvib.harness.config import RunConfig
from nvib.harness.runs import fit, generation_fppl


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--lambda-g", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = RunConfig(lambda_d_prime=1.0, lambda_g_prime=args.lambda_g, seed=args.seed, steps=args.steps,
                    conditional_prior=False)
    model, train_c, _, _ = fit(cfg)
    out = generation_fppl(model, train_c, count=args.count, seed=args.seed)
    vocab = train_c.vocab
    for g in out["generated"][:5]:
        print(" ".join(vocab[i] for i in g[1:-1]))
    print(f"F-PPL generated {out['f_ppl']:.2f}  random {out['random_f_ppl']:.2f}  data {out['data_f_ppl']:.2f}")


if __name__ == "__main__":
    main()
