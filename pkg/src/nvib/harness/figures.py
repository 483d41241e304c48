"""Series behind the figures: Gamma-approximation error curves and nu against length.

Rendering lives in ``plots``; everything here returns plain arrays so it can
be tested and written to CSV without a plotting backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..distributions import GAMMA_SWITCH, gamma_inverse_cdf_approx
from ..numerics.special import gamma_inverse_cdf, normal_ppf


def quantile_grid(n: int = 1000, lo: float = 0.001, hi: float = 0.999) -> np.ndarray:
    return np.linspace(lo, hi, n)


@dataclass
class ApproxErrors:
    alphas: np.ndarray
    inverse_cdf: np.ndarray
    gaussian: np.ndarray


def gamma_approx_errors(alphas, u=None) -> ApproxErrors:
    """Mean |approximate - exact| Gamma quantile over the grid ``u`` for each alpha.

    The Gaussian curve uses alpha + sqrt(alpha) * Phi^-1(u) without the
    positivity floor, so it measures the approximation itself rather than
    the sampler's safety clamp.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    u = quantile_grid() if u is None else np.asarray(u, dtype=np.float64)
    A, U = alphas[:, None], u[None, :]
    exact = gamma_inverse_cdf(A, U)
    inv = gamma_inverse_cdf_approx(np.broadcast_to(A, exact.shape), np.broadcast_to(U, exact.shape)).data
    gauss = A + np.sqrt(A) * normal_ppf(u)[None, :]
    return ApproxErrors(alphas, np.abs(inv - exact).mean(axis=1), np.abs(gauss - exact).mean(axis=1))


def crossover(lo: float = 0.3, hi: float = 1.0, u=None, coarse: int = 71, tol: float = 1e-4) -> float:
    """alpha where the two error curves meet, by a coarse scan then bisection."""
    grid = np.linspace(lo, hi, coarse)
    e = gamma_approx_errors(grid, u)
    diff = e.inverse_cdf - e.gaussian
    sign = np.flatnonzero(np.diff(np.sign(diff)) != 0)
    if len(sign) == 0:
        raise ValueError("error curves do not cross in the scanned range")
    a, b = grid[sign[0]], grid[sign[0] + 1]
    da = diff[sign[0]]
    while b - a > tol:
        m = 0.5 * (a + b)
        em = gamma_approx_errors([m], u)
        dm = em.inverse_cdf[0] - em.gaussian[0]
        if np.sign(dm) == np.sign(da):
            a, da = m, dm
        else:
            b = m
    return 0.5 * (a + b)


def crossings(errors: ApproxErrors) -> int:
    """Number of sign changes of (inverse-CDF error - Gaussian error) along alpha."""
    d = np.sign(errors.inverse_cdf - errors.gaussian)
    d = d[d != 0]
    return int(np.sum(d[1:] != d[:-1]))


def nu_by_length(lengths, nus) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Group per-sentence retained proportions by length: (n, mean nu, mean retained count)."""
    lengths = np.asarray(lengths)
    nus = np.asarray(nus, dtype=np.float64)
    ns = np.unique(lengths)
    mean_nu = np.array([nus[lengths == n].mean() for n in ns])
    return ns, mean_nu, mean_nu * ns


__all__ = ["ApproxErrors", "gamma_approx_errors", "crossover", "crossings", "nu_by_length", "quantile_grid",
           "GAMMA_SWITCH"]
