"""Gamma approximation error curves and their crossover.

    python scripts/fig3.py --out runs/fig3
"""

import argparse

from nvib.harness.figures import crossover, gamma_approx_errors
from nvib.harness.plots import plot_fig3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/fig3")
    args = ap.parse_args()
    for p in plot_fig3(args.out):
        print("wrote", p)
    e = gamma_approx_errors([0.2, 2.0])
    print(f"crossover alpha = {crossover():.4f}")
    for a, i, g in zip(e.alphas, e.inverse_cdf, e.gaussian):
        print(f"alpha {a:.1f}: inverse-CDF error {i:.4g}, Gaussian error {g:.4g}")


if __name__ == "__main__":
    main()
