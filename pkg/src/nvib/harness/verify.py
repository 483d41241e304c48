"""Runnable property suite.

Every invariant declared for the library has an entry in ``MANIFEST``;
each entry is bound to one registered check. ``run_suite`` refuses to run
when the two disagree, so a new invariant cannot be added without a check.
Each check returns the measured quantity and the bound it is held to.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import attention as A
from .. import distributions as D
from .. import divergences as K
from ..layer import NvibConfig, NvibLayer, nvib_forward_test, nvib_forward_train, nvib_kl, retained_proportion
from ..model import ModelConfig, Seq2Seq, TrainConfig, pad_batch, stride_keep
from ..model.train import train_step
from ..nn import Adam
from ..numerics import special as S
from ..numerics import tensor as T
from ..numerics.gradcheck import check_gradients, relative_error
from ..numerics.noise import NoiseSource
from ..numerics.tensor import Parameter, Tensor
from ..posterior import PosteriorParams

SUITES = ("numerics", "distributions", "kl", "attention", "fdp", "gradients", "nvib", "model", "harness")


@dataclass
class CheckResult:
    id: str
    suite: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag}  {self.id:<38} measured={self.measured:.3g} bound={self.bound:.3g} ({self.seconds:.1f}s) {self.detail}"


_REGISTRY: dict[str, tuple[str, Callable]] = {}


def check(cid: str, suite: str):
    def deco(fn):
        _REGISTRY[cid] = (suite, fn)
        return fn
    return deco


def _le(measured, bound, detail=""):
    return bool(measured <= bound), float(measured), float(bound), detail


# One line per declared invariant.
MANIFEST = {
    "numerics.op_gradients": "analytic vs central-difference gradients of every differentiable op",
    "numerics.softmax_sums": "softmax rows sum to one, including wide-range rows",
    "numerics.lgamma_recurrence": "lnG(x+1) = lnG(x) + ln x",
    "numerics.noise_determinism": "same seed, same draws",
    "distributions.beta_marginal": "component total weight of a two-component BFDP is Beta",
    "distributions.fdp_weights": "equal-Gaussian factorised DP has expected weights alpha_i/alpha_0",
    "distributions.switch_continuity": "Gamma sampler mean is continuous across the switch",
    "distributions.determinism": "samplers are functions of parameters and noise",
    "distributions.sampler_gradients": "reparameterized samplers differentiate correctly",
    "distributions.fig3_crossover": "the two Gamma approximation error curves cross near 0.6363",
    "kl.dirichlet_nonneg": "Dirichlet KL is non-negative and zero only for equal arguments",
    "kl.gaussian_mc": "diagonal Gaussian KL matches Monte-Carlo",
    "kl.dirichlet_mc": "Dirichlet KL matches Monte-Carlo",
    "kl.combined_form": "given-kappa KL equals the Dirichlet-sum combined form",
    "kl.one_sample_unit_kappa": "one-sample KL equals given-kappa KL at kappa = 1",
    "kl.gradients": "L_D and L_G gradients",
    "kl.conditional_target": "expected-kappa L_D vanishes at alpha0_q = alpha0_p'",
    "attention.equivalence": "denoising attention over impulses equals attention",
    "attention.permutation": "outputs invariant to permuting the set",
    "attention.convex_hull": "Gaussian-mixture output lies in the hull of the interpolants",
    "attention.mask_zero": "masked components get zero weight",
    "attention.quadrature": "Gaussian-mixture closed form matches quadrature in d = 1",
    "attention.gradients": "gradients of both denoising forms",
    "nvib.train_test_consistency": "test-time attention tends to discrete attention over means as sigma -> 0",
    "nvib.kl_prior_only": "KL is zero for a prior-only posterior at the conditional concentration",
    "nvib.nu_monotone": "nu does not increase with lambda_D'",
    "nvib.no_nan": "sampling path stays finite over random valid posteriors",
    "nvib.layer_gradients": "reconstruction-through-sample gradients w.r.t. mu, sigma, alpha",
    "model.full_gradcheck": "full NVAE loss gradients on a d=8 micro-batch",
    "model.loss_decreases": "teacher-forced loss falls over the first 50 steps",
    "model.latent_permutation": "decoder logits invariant to latent row permutation",
    "model.vts_mask": "stride mask is evenly spaced and content independent",
    "harness.cli_determinism": "fixed-seed runs write identical metrics",
    "harness.roundtrip": "checkpoint reload reproduces validation loss",
    "harness.manifest": "every invariant has a registered check",
}


# ---------------------------------------------------------------- numerics

def _fd_op(fn, shapes, rng, positive=False, eps=1e-5):
    xs = [Parameter(rng.uniform(0.5, 2.0, s) if positive else rng.normal(size=s)) for s in shapes]
    c = rng.normal(size=np.shape(fn(*[Tensor(x.data) for x in xs]).data))
    res = check_gradients(lambda: T.tsum(fn(*xs) * c), xs, eps=eps)
    return max(r.rel_error for r in res)


OP_CASES = {
    "add": (lambda a, b: a + b, [(3, 4), (4,)], False),
    "sub": (lambda a, b: a - b, [(3, 4), (3, 1)], False),
    "mul": (lambda a, b: a * b, [(3, 4), (3, 4)], False),
    "div": (lambda a, b: a / b, [(3, 4), (4,)], True),
    "neg": (lambda a: -a, [(5,)], False),
    "power": (lambda a: T.power(a, 2.5), [(5,)], True),
    "exp": (T.exp, [(5,)], False),
    "log": (T.log, [(5,)], True),
    "sqrt": (T.sqrt, [(5,)], True),
    "tanh": (T.tanh, [(5,)], False),
    "relu": (lambda a: T.relu(a + 0.05 * np.sign(a.data)), [(6,)], False),
    "maximum": (lambda a: T.maximum(a, -10.0), [(6,)], False),
    "clip": (lambda a: T.clip(a, -10.0, 10.0), [(6,)], False),
    "where": (lambda a, b: T.where(np.arange(6) % 2 == 0, a, b), [(6,), (6,)], False),
    "lgamma": (T.lgamma, [(5,)], True),
    "digamma": (T.digamma, [(5,)], True),
    "tsum": (lambda a: T.tsum(a, axis=1), [(3, 4)], False),
    "mean": (lambda a: T.mean(a, axis=0), [(3, 4)], False),
    "tmax": (lambda a: T.tmax(a, axis=1), [(3, 4)], False),
    "reshape": (lambda a: T.reshape(a, (4, 3)), [(3, 4)], False),
    "transpose": (T.transpose, [(2, 3, 4)], False),
    "getitem": (lambda a: T.getitem(a, (np.array([0, 2, 2]), slice(1, 3))), [(3, 4)], False),
    "concat": (lambda a, b: T.concat([a, b], axis=0), [(2, 3), (1, 3)], False),
    "stack": (lambda a, b: T.stack([a, b], axis=1), [(2, 3), (2, 3)], False),
    "matmul": (T.matmul, [(2, 3, 4), (4, 5)], False),
    "softmax": (lambda a: T.softmax(a, axis=-1), [(3, 5)], False),
    "log_softmax": (lambda a: T.log_softmax(a, axis=-1), [(3, 5)], False),
    "logsumexp": (lambda a: T.logsumexp(a, axis=-1), [(3, 5)], False),
    "normalize": (lambda a: T.normalize(a, axis=-1), [(3, 5)], False),
    "embedding": (lambda a: T.embedding(a, np.array([[0, 2], [2, 1]])), [(3, 4)], False),
}


@check("numerics.op_gradients", "gradients")
def _op_gradients(reps: int = 50):
    rng = np.random.default_rng(0)
    worst, name = 0.0, ""
    for op, (fn, shapes, pos) in OP_CASES.items():
        for _ in range(reps):
            e = _fd_op(fn, shapes, rng, pos)
            if e > worst:
                worst, name = e, op
    return _le(worst, 1e-5, f"worst op {name}, {len(OP_CASES)} ops x {reps}")


@check("numerics.softmax_sums", "numerics")
def _softmax_sums():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(500, 7)) * rng.choice([1, 100, 800], size=(500, 1))
    return _le(float(np.max(np.abs(T.softmax(x).data.sum(axis=-1) - 1.0))), 1e-12)


@check("numerics.lgamma_recurrence", "numerics")
def _lgamma_rec():
    x = np.random.default_rng(2).uniform(1e-3, 100, 1000)
    return _le(float(np.max(np.abs(S.log_gamma(x + 1) - S.log_gamma(x) - np.log(x)))), 1e-10)


@check("numerics.noise_determinism", "numerics")
def _noise_det():
    a, b = NoiseSource(11), NoiseSource(11)
    same = all(np.array_equal(f(a), f(b)) for f in (lambda n: n.uniform(100), lambda n: n.normal(100),
                                                      lambda n: n.exact_gamma(np.ones(10))))
    return (same, 0.0 if same else 1.0, 0.0, "bit-identical streams")


# ---------------------------------------------------------------- distributions

def ks_two_sample(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    x, y = np.sort(x), np.sort(y)
    allv = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, allv, side="right") / len(x)
    cdf_y = np.searchsorted(y, allv, side="right") / len(y)
    d = float(np.max(np.abs(cdf_x - cdf_y)))
    en = math.sqrt(len(x) * len(y) / (len(x) + len(y)))
    lam = (en + 0.12 + 0.11 / en) * d
    p = 2.0 * sum((-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam) for k in range(1, 101))
    return d, float(min(max(p, 0.0), 1.0))


def beta_marginal_pvalue(a1=1.5, a2=3.0, kappas=(2, 3), draws=10_000, seed=0) -> tuple[float, float, float]:
    """KS p-value of rho_1 from sample_bfdp (exact Gammas) vs direct Beta draws; plus mean error in SEs."""
    spec = D.BoundedDPSpec([(D.GaussianDiag.standard(2), a1), (D.GaussianDiag.standard(2), a2)], list(kappas))
    s = D.sample_bfdp(spec, NoiseSource(seed), batch=draws, exact=True)
    w1 = s.weights.data[:, s.component_of == 0].sum(axis=1)
    ref = NoiseSource(seed + 1000)
    g1, g2 = ref.exact_gamma(np.full(draws, a1)), ref.exact_gamma(np.full(draws, a2))
    _, p = ks_two_sample(w1, g1 / (g1 + g2))
    se = w1.std(ddof=1) / math.sqrt(draws)
    return p, abs(w1.mean() - a1 / (a1 + a2)) / se, float(w1.mean())


@check("distributions.beta_marginal", "fdp")
def _beta_marginal():
    p, _, _ = beta_marginal_pvalue()
    return (p > 0.01, p, 0.01, "KS p-value must exceed the bound")


def fdp_weight_errors(alphas=(0.5, 1.0, 2.5), kappas=(2, 1, 4), draws=100_000, seed=3) -> np.ndarray:
    """Per-component |mean total weight - alpha_i/alpha_0| in standard errors, identical Gaussians."""
    g = D.GaussianDiag.standard(2)
    spec = D.BoundedDPSpec([(g, a) for a in alphas], list(kappas))
    s = D.sample_bfdp(spec, NoiseSource(seed), batch=draws, exact=True)
    a0 = sum(alphas)
    out = []
    for i, a in enumerate(alphas):
        w = s.weights.data[:, s.component_of == i].sum(axis=1)
        out.append(abs(w.mean() - a / a0) / (w.std(ddof=1) / math.sqrt(draws)))
    return np.array(out)


@check("distributions.fdp_weights", "fdp")
def _fdp_weights():
    return _le(float(fdp_weight_errors().max()), 3.0, "max standard errors over components")


@check("distributions.switch_continuity", "distributions")
def _switch():
    n = 100_000
    m1 = D.sample_gamma(np.full(n, 0.63), NoiseSource(4)).data.mean()
    m2 = D.sample_gamma(np.full(n, 0.64), NoiseSource(5)).data.mean()
    return _le(abs(m1 - m2), 0.05, f"means {m1:.4f} / {m2:.4f}")


@check("distributions.determinism", "distributions")
def _dist_det():
    spec = D.BoundedDPSpec([(D.GaussianDiag.standard(3), 1.2), (D.GaussianDiag.standard(3), 0.4)], [2, 1])
    s1, s2 = D.sample_bfdp(spec, NoiseSource(9)), D.sample_bfdp(spec, NoiseSource(9))
    g1 = D.sample_dirichlet([0.3, 2.0, 5.0], NoiseSource(1)).data
    g2 = D.sample_dirichlet([0.3, 2.0, 5.0], NoiseSource(1)).data
    same = (np.array_equal(s1.weights.data, s2.weights.data) and np.array_equal(s1.vectors.data, s2.vectors.data)
            and np.array_equal(g1, g2))
    return (same, 0.0 if same else 1.0, 0.0, "bit-identical samples")


def sampler_gradient_errors(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    mu, sig = Parameter(rng.normal(size=4)), Parameter(rng.uniform(0.5, 2, 4))
    eps = rng.normal(size=4)
    c = rng.normal(size=4)
    out["sample_gaussian"] = max(r.rel_error for r in check_gradients(
        lambda: T.tsum(D.sample_gaussian(D.GaussianDiag(mu, sig), eps) * c), [mu, sig]))
    a = Parameter(rng.uniform(0.1, 3.0, 4))
    u = rng.uniform(0.05, 0.95, 4)
    out["gamma_inverse_cdf_approx"] = check_gradients(
        lambda: T.tsum(D.gamma_inverse_cdf_approx(a, u) * c), [a])[0].rel_error
    a2 = Parameter(rng.uniform(0.7, 5.0, 4))
    e2 = rng.normal(size=4) * 0.5
    out["gamma_gaussian_approx"] = check_gradients(
        lambda: T.tsum(D.gamma_gaussian_approx(a2, e2) * c), [a2])[0].rel_error
    a3 = Parameter(np.array([0.3, 0.9, 2.0, 4.0]))
    u3, e3 = rng.uniform(0.05, 0.95, 4), rng.normal(size=4) * 0.3
    out["sample_dirichlet"] = check_gradients(
        lambda: T.tsum(D.sample_dirichlet(a3, (u3, e3)) * c), [a3])[0].rel_error
    return out


@check("distributions.sampler_gradients", "gradients")
def _sampler_grads():
    errs = {}
    for seed in range(10):
        for k, v in sampler_gradient_errors(seed).items():
            errs[k] = max(errs.get(k, 0.0), v)
    k = max(errs, key=errs.get)
    return _le(errs[k], 1e-5, f"worst {k}")


@check("distributions.fig3_crossover", "distributions")
def _fig3():
    from .figures import crossover, gamma_approx_errors

    a = crossover()
    e = gamma_approx_errors([0.2, 2.0])
    order = e.inverse_cdf[0] < e.gaussian[0] and e.inverse_cdf[1] > e.gaussian[1]
    dev = abs(a - D.GAMMA_SWITCH)
    return (dev < 0.05 and order, dev, 0.05, f"alpha_hat={a:.4f}, ordering at 0.2/2.0 {'ok' if order else 'wrong'}")


# ---------------------------------------------------------------- KL

@check("kl.dirichlet_nonneg", "kl")
def _kl_nonneg():
    rng = np.random.default_rng(6)
    aq, ap = rng.uniform(0.05, 10, (1000, 4)), rng.uniform(0.05, 10, (1000, 4))
    kl = K.kl_dirichlet(aq, ap).data
    zero = float(np.max(np.abs(K.kl_dirichlet(aq, aq).data)))
    ok = kl.min() > 0 and zero < 1e-10
    return (ok, float(kl.min()), 0.0, f"min KL over random pairs (must be > 0); equal-argument KL {zero:.1e}")


def mc_kl_gaussian(mq, sq, mp, sp, n=1_000_000, seed=0) -> tuple[float, float]:
    x = mq + sq * np.random.default_rng(seed).standard_normal((n, len(mq)))
    lq = -0.5 * (((x - mq) / sq) ** 2 + 2 * np.log(sq)).sum(axis=1)
    lp = -0.5 * (((x - mp) / sp) ** 2 + 2 * np.log(sp)).sum(axis=1)
    d = lq - lp
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(n))


def mc_kl_dirichlet(aq, ap, n=1_000_000, seed=0) -> tuple[float, float]:
    g = np.random.default_rng(seed).standard_gamma(aq, size=(n, len(aq)))
    x = g / g.sum(axis=1, keepdims=True)
    logx = np.log(np.maximum(x, 1e-300))
    lq = (S.log_gamma(np.sum(aq)) - np.sum(S.log_gamma(aq))) + ((aq - 1) * logx).sum(axis=1)
    lp = (S.log_gamma(np.sum(ap)) - np.sum(S.log_gamma(ap))) + ((ap - 1) * logx).sum(axis=1)
    d = lq - lp
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(n))


def kl_mc_zscores(kind: str, pairs: int = 20, n: int = 1_000_000) -> np.ndarray:
    rng = np.random.default_rng(7 if kind == "gaussian" else 8)
    z = []
    for i in range(pairs):
        if kind == "gaussian":
            d = int(rng.integers(1, 4))
            mq, mp = rng.normal(size=d), rng.normal(size=d)
            sq, sp = rng.uniform(0.5, 2, d), rng.uniform(0.5, 2, d)
            exact = float(K.kl_gaussian_diag(D.GaussianDiag(mq, sq), D.GaussianDiag(mp, sp)).data)
            est, se = mc_kl_gaussian(mq, sq, mp, sp, n, seed=i)
        else:
            k = int(rng.integers(2, 5))
            aq, ap = rng.uniform(0.8, 5, k), rng.uniform(0.8, 5, k)
            exact = float(K.kl_dirichlet(aq, ap).data)
            est, se = mc_kl_dirichlet(aq, ap, n, seed=i)
        z.append(abs(est - exact) / se)
    return np.array(z)


@check("kl.gaussian_mc", "kl")
def _kl_gauss_mc():
    return _le(float(kl_mc_zscores("gaussian").max()), 3.0, "max |MC - closed form| in standard errors")


@check("kl.dirichlet_mc", "kl")
def _kl_dir_mc():
    return _le(float(kl_mc_zscores("dirichlet").max()), 3.0, "max |MC - closed form| in standard errors")


def random_posterior(rng, m: int, d: int, zero_frac: float = 0.0, lo: float = 0.1, hi: float = 5.0) -> PosteriorParams:
    a = rng.uniform(lo, hi, m)
    if zero_frac:
        a[:-1] = np.where(rng.uniform(size=m - 1) < zero_frac, 0.0, a[:-1])
    return PosteriorParams(a, rng.normal(size=(m, d)), rng.normal(scale=0.5, size=(m, d)))


def combined_form(post: PosteriorParams, a0p: float, kappas) -> tuple[float, float]:
    """Reference: Dirichlet over components plus inner symmetric Dirichlets, plus the Gaussian sum."""
    mask = post.mask
    a = post.alphas.data[mask]
    k = np.asarray(kappas, dtype=float)[mask]
    a0q = a.sum()
    l_d = float(K.kl_dirichlet(a, a * a0p / a0q).data)
    for ai, ki in zip(a, k):
        if ki > 1:
            l_d += float(K.kl_dirichlet(np.full(int(ki), ai / ki), np.full(int(ki), a0p * ai / (a0q * ki))).data)
    mu, ls = post.mus.data[mask], post.log_sigmas.data[mask]
    l_g = 0.5 * float(np.sum(k[:, None] * (mu ** 2 + np.exp(2 * ls) - 1 - 2 * ls)))
    return l_d, l_g


@check("kl.combined_form", "kl")
def _kl_combined():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 6))
        post = random_posterior(rng, m, 3, zero_frac=0.3)
        kap = rng.integers(1, 5, m)
        a0p = float(rng.uniform(0.5, 8))
        ref = combined_form(post, a0p, kap)
        got = K.kl_bfdp_given_kappa(post, a0p, kap)
        worst = max(worst, abs(float(got.l_d.data) - ref[0]), abs(float(got.l_g.data) - ref[1]))
    return _le(worst, 1e-10)


@check("kl.one_sample_unit_kappa", "kl")
def _kl_unit():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 8))
        post = random_posterior(rng, m, 4, zero_frac=0.3)
        a0p = float(rng.uniform(0.5, 10))
        a, b = K.kl_one_sample(post, a0p), K.kl_bfdp_given_kappa(post, a0p, np.ones(m))
        worst = max(worst, abs(float(a.l_d.data - b.l_d.data)), abs(float(a.l_g.data - b.l_g.data)))
    return _le(worst, 1e-10)


def kl_gradient_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    m, d = 4, 3
    al = Parameter(rng.uniform(0.3, 4, m))
    mu = Parameter(rng.normal(size=(m, d)))
    ls = Parameter(rng.normal(scale=0.5, size=(m, d)))
    a0p = float(rng.uniform(1, 6))
    post = lambda: PosteriorParams(al, mu, ls)
    worst = 0.0
    for fn in (lambda: K.kl_one_sample(post(), a0p).l_d, lambda: K.kl_one_sample(post(), a0p).l_g,
               lambda: K.kl_bfdp_given_kappa(post(), a0p, [1, 2, 3, 1]).l_d,
               lambda: K.kl_bfdp_expected_kappa(post(), a0p, 7.0).l_d,
               lambda: K.kl_bfdp_expected_kappa(post(), a0p, 7.0).l_g):
        res = check_gradients(fn, [al, mu, ls])
        worst = max(worst, max(r.rel_error for r in res if r.analytic_norm > 0 or r.numeric_norm > 1e-8))
    return worst


@check("kl.gradients", "gradients")
def _kl_grads():
    return _le(max(kl_gradient_error(s) for s in range(10)), 1e-4)


@check("kl.conditional_target", "kl")
def _kl_target():
    rng = np.random.default_rng(11)
    prior = K.PriorSpec(alpha0_p=1.0, delta_p=0.7)
    worst = 0.0
    for n in range(1, 30):
        target = K.conditional_prior(prior, n)
        a = rng.uniform(0.1, 1, n + 1)
        a = a / a.sum() * target
        post = PosteriorParams(a, rng.normal(size=(n + 1, 2)), np.zeros((n + 1, 2)))
        worst = max(worst, abs(float(K.kl_bfdp_expected_kappa(post, target, n).l_d.data)))
    return _le(worst, 1e-10)


# ---------------------------------------------------------------- attention

def equivalence_error(instances: int = 1000, seed: int = 12) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n, p = int(rng.integers(1, 17)), int(rng.integers(1, 33))
        Z, u = rng.normal(size=(n, p)), rng.normal(size=p)
        worst = max(worst, float(np.max(np.abs(A.dattn_discrete(u, A.impulse_mixture(Z)).data - A.attn(u, Z).data))))
    return worst


@check("attention.equivalence", "attention")
def _att_equiv():
    return _le(equivalence_error(), 1e-9, "1000 instances, n<=16, p<=32")


@check("attention.permutation", "attention")
def _att_perm():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(100):
        n, p = int(rng.integers(2, 10)), int(rng.integers(1, 8))
        Z, u, perm = rng.normal(size=(n, p)), rng.normal(size=p), rng.permutation(n)
        worst = max(worst, float(np.max(np.abs(A.attn(u, Z).data - A.attn(u, Z[perm]).data))))
        mix = A.impulse_mixture(Z)
        pm = A.DiscreteMixture(mix.weights.data[perm], Z[perm])
        worst = max(worst, float(np.max(np.abs(A.dattn_discrete(u, mix).data - A.dattn_discrete(u, pm).data))))
        post = random_posterior(rng, n, p)
        pp = PosteriorParams(post.alphas.data[perm], post.mus.data[perm], post.log_sigmas.data[perm])
        worst = max(worst, float(np.max(np.abs(A.dattn_gaussian_mixture(u, post).data
                                               - A.dattn_gaussian_mixture(u, pp).data))))
    return _le(worst, 1e-12)


@check("attention.convex_hull", "attention")
def _att_hull():
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(200):
        n, p = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        post = random_posterior(rng, n, p)
        u = rng.normal(size=p) * 2
        w, _, _ = A.gaussian_mixture_weights(u, post.alphas, post.mus, post.sigmas)
        w = w.data[0]
        pts = A.interpolants(u, post).data[0]
        out = A.dattn_gaussian_mixture(u, post).data
        # output is a convex combination with the returned weights: check weights and reconstruction
        worst = max(worst, float(np.max(np.abs(w @ pts - out))), float(max(0.0, -w.min())), abs(w.sum() - 1.0))
    return _le(worst, 1e-12, "convex weights reproduce the output")


@check("attention.mask_zero", "attention")
def _att_mask():
    rng = np.random.default_rng(15)
    worst = 0.0
    for _ in range(100):
        post = random_posterior(rng, 6, 3, zero_frac=0.5)
        u = rng.normal(size=(4, 3))
        w, _, _ = A.gaussian_mixture_weights(u, post.alphas, post.mus, post.sigmas)
        worst = max(worst, float(np.max(np.abs(w.data[:, ~post.mask]))) if (~post.mask).any() else 0.0)
        pi = np.where(post.mask, rng.uniform(0.1, 1, 6), 0.0)
        mix = A.DiscreteMixture(pi / pi.sum(), rng.normal(size=(6, 3)))
        logits = mix.logits().data
        wd = np.exp(logits - logits.max())
        worst = max(worst, float(np.max(wd[~post.mask])) if (~post.mask).any() else 0.0)
    return (worst == 0.0, worst, 0.0, "exact zeros")


def quadrature_reference(u: float, alphas, mus, sigmas, d: int = 1, grid: int = 200_001) -> float:
    """Posterior mean of v given u under mixture prior sum a_i N(mu_i, s_i^2) and noise N(0, sqrt(d))."""
    v = np.linspace(-20, 20, grid)
    dens = sum(a * np.exp(-0.5 * ((v - m) / s) ** 2) / s for a, m, s in zip(alphas, mus, sigmas))
    like = np.exp(-0.5 * (u - v) ** 2 / math.sqrt(d))
    w = dens * like
    return float(np.trapezoid(w * v, v) / np.trapezoid(w, v))


def quadrature_errors(cases: int = 50, seed: int = 16) -> np.ndarray:
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(cases):
        m = int(rng.integers(1, 5))
        a, mu, s = rng.uniform(0.2, 3, m), rng.uniform(-3, 3, m), rng.uniform(0.3, 2, m)
        u = float(rng.uniform(-4, 4))
        post = PosteriorParams.from_arrays(a, mu[:, None], s[:, None])
        got = float(A.dattn_gaussian_mixture(np.array([u]), post, d=1).data[0])
        errs.append(abs(got - quadrature_reference(u, a, mu, s)))
    return np.array(errs)


@check("attention.quadrature", "attention")
def _att_quad():
    return _le(float(quadrature_errors().max()), 1e-3, "50 mixtures, d=1")


def attention_gradient_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    n, p = 4, 3
    u, Z = Parameter(rng.normal(size=(2, p))), Parameter(rng.normal(size=(n, p)))
    logpi = rng.normal(size=n)
    pi = np.exp(logpi) / np.exp(logpi).sum()
    c = rng.normal(size=(2, p))
    res = check_gradients(lambda: T.tsum(A.dattn_discrete(u, A.DiscreteMixture(pi, Z)) * c), [u, Z])
    al, mu, ls = Parameter(rng.uniform(0.3, 3, n)), Parameter(rng.normal(size=(n, p))), \
        Parameter(rng.normal(scale=0.3, size=(n, p)))
    res += check_gradients(lambda: T.tsum(A.dattn_gaussian_mixture(u, PosteriorParams(al, mu, ls)) * c),
                           [u, al, mu, ls])
    return max(r.rel_error for r in res)


@check("attention.gradients", "gradients")
def _att_grads():
    return _le(max(attention_gradient_error(s) for s in range(10)), 1e-5)


# ---------------------------------------------------------------- NVIB layer

@check("nvib.train_test_consistency", "nvib")
def _nvib_consistency():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(20):
        m, d = 5, 4
        a = rng.uniform(0.5, 3, m)
        mu = rng.normal(size=(m, d))
        post = PosteriorParams(a, mu, np.full((m, d), math.log(1e-4)))
        u = rng.normal(size=(3, d))
        test = nvib_forward_test(post)(u).data
        disc = A.dattn_discrete(u, A.DiscreteMixture(a / a.sum(), mu)).data
        worst = max(worst, float(np.max(np.abs(test - disc))))
    return _le(worst, 1e-2, "sigma = 1e-4")


@check("nvib.kl_prior_only", "nvib")
def _nvib_kl_prior():
    cfg = NvibConfig(1.0, 1.0, delta_p=0.5, alpha0_p=1.0)
    worst = 0.0
    for n in (1, 3, 10):
        a0 = cfg.alpha0_p + n * cfg.delta_p
        alphas = np.zeros(n + 1)
        alphas[-1] = a0
        post = PosteriorParams(alphas, np.zeros((n + 1, 4)), np.zeros((n + 1, 4)), lengths=n)
        _, kl = nvib_forward_train(post, NoiseSource(0), cfg)
        worst = max(worst, abs(float(kl.total.data)), abs(float(kl.weighted.data)))
    return _le(worst, 1e-12)


def nu_sweep(lambda_ds=(0.0, 0.1, 0.3, 1.0), steps: int = 600, seed: int = 0) -> list[float]:
    """Retained proportion after short trainings that differ only in lambda_D'.

    The KL targets the unconditional prior: against the conditional one the
    one-sample L_D does not reward pruning, so every nu would stay at 1.
    """
    from .data import synthetic_corpus
    from ..model.train import evaluate_loss, train

    corpus = synthetic_corpus(96, vocab_size=24, min_len=5, max_len=10, seed=seed)
    nus = []
    for ld in lambda_ds:
        cfg = ModelConfig(vocab_size=24, model_dim=16, ff_dim=32, max_len=16, variant="NVAE",
                          nvib=NvibConfig(ld, 0.1, conditional_prior=False), dropout=0.0)
        m = Seq2Seq(cfg, seed=seed)
        train(m, corpus.sentences, TrainConfig(steps=steps, log_every=steps, seed=seed, lr=2e-3))
        nus.append(evaluate_loss(m, corpus.sentences)["nu"])
    return nus


@check("nvib.nu_monotone", "nvib")
def _nu_monotone():
    nus = nu_sweep()
    rises = max(0.0, max(b - a for a, b in zip(nus, nus[1:])))
    return (rises <= 0.0, rises, 0.0, "nu per lambda_D' = " + ", ".join(f"{x:.3f}" for x in nus))


@check("nvib.no_nan", "nvib")
def _nvib_fuzz():
    rng = np.random.default_rng(18)
    cfg = NvibConfig(1.0, 1.0)
    bad = 0
    for i in range(10_000):
        m, d = int(rng.integers(1, 6)), 2
        a = np.concatenate([np.where(rng.uniform(size=m) < 0.3, 0.0, 10 ** rng.uniform(-4, 3, m)), [1.0]])
        ls = rng.uniform(-8, 8, (m + 1, d))
        ls[-1] = 0
        mu = rng.normal(scale=10 ** rng.uniform(-2, 2), size=(m + 1, d))
        mu[-1] = 0
        post = PosteriorParams(a, mu, ls, lengths=m)
        mix, kl = nvib_forward_train(post, NoiseSource(i), cfg)
        vals = np.concatenate([mix.weights.data.ravel(), mix.vectors.data.ravel(), [float(kl.weighted.data)]])
        bad += int(not np.all(np.isfinite(vals)))
    return _le(bad, 0, "non-finite outcomes over 1e4 posteriors")


def layer_gradient_error(seed: int = 0) -> float:
    """Reconstruction through the train-time sample, at fixed noise, w.r.t. alpha, mu and log sigma."""
    rng = np.random.default_rng(seed)
    n, d = 4, 3
    al = Parameter(np.concatenate([rng.uniform(0.3, 3, n)]))
    mu = Parameter(rng.normal(size=(n, d)))
    ls = Parameter(rng.normal(scale=0.3, size=(n, d)))
    u, c = rng.normal(size=(2, d)), rng.normal(size=(2, d))
    cfg = NvibConfig(1.0, 0.5)

    def loss():
        post = PosteriorParams(T.concat([al, np.ones(1)]), T.concat([mu, np.zeros((1, d))]),
                               T.concat([ls, np.zeros((1, d))]), lengths=n)
        mix, kl = nvib_forward_train(post, NoiseSource(seed), cfg)
        return T.tsum(A.dattn_discrete(u, mix) * c) + kl.weighted

    return max(r.rel_error for r in check_gradients(loss, [al, mu, ls]))


@check("nvib.layer_gradients", "gradients")
def _layer_grads():
    return _le(max(layer_gradient_error(s) for s in range(10)), 1e-4)


# ---------------------------------------------------------------- model

def micro_model(variant: str = "NVAE", d: int = 8, seed: int = 0, dropout: float = 0.1):
    cfg = ModelConfig(vocab_size=10, model_dim=d, ff_dim=2 * d, max_len=12, variant=variant,
                      nvib=NvibConfig(1.0, 0.5), dropout=dropout)
    model = Seq2Seq(cfg, seed=seed)
    ids, lengths = pad_batch([np.array([1, 5, 6, 7, 2]), np.array([1, 8, 4, 9, 5, 6, 2])])
    return model, ids, lengths


def full_model_gradient_errors(variant: str = "NVAE", seed: int = 0) -> dict:
    model, ids, lengths = micro_model(variant, seed=seed)
    model.train()
    names, params = zip(*model.named_parameters())
    res = check_gradients(lambda: model.loss(ids, lengths, NoiseSource(seed + 100)).total, list(params),
                          names=list(names))
    return {r.name: r.rel_error for r in res if r.analytic_norm > 1e-10 or r.numeric_norm > 1e-8}


@check("model.full_gradcheck", "gradients")
def _full_grad():
    errs = full_model_gradient_errors()
    k = max(errs, key=errs.get)
    return _le(errs[k], 1e-3, f"worst parameter {k}")


@check("model.loss_decreases", "model")
def _loss_decrease():
    from .data import synthetic_corpus

    corpus = synthetic_corpus(32, vocab_size=20, min_len=5, max_len=10, seed=1)
    cfg = ModelConfig(vocab_size=20, model_dim=16, ff_dim=32, max_len=16, variant="NVAE", dropout=0.0)
    model = Seq2Seq(cfg, seed=0)
    opt = Adam(model.parameters(), lr=5e-4, clip_norm=0.1)
    ids, lengths = pad_batch(corpus.sentences)
    losses = []
    for step in range(51):
        model.eval()
        losses.append(model.loss(ids, lengths).value)
        if step < 50:
            train_step(model, opt, ids, lengths, NoiseSource(step))
    # eval-mode loss on the whole corpus, full-batch steps; each step must lower it
    rises = max(0.0, max(b - a for a, b in zip(losses, losses[1:])))
    return (rises == 0.0, rises, 0.0, f"loss {losses[0]:.3f} -> {losses[-1]:.3f}")


@check("model.latent_permutation", "model")
def _latent_perm():
    model, ids, lengths = micro_model("NVAE", dropout=0.0)
    model.eval()
    rng = np.random.default_rng(19)
    m, d = 6, model.cfg.model_dim
    pi = rng.dirichlet(np.ones(m))
    Z = rng.normal(size=(1, m, d))
    perm = rng.permutation(m)
    from ..model.transformer import Latent

    lat = lambda w, z: Latent(lambda u: A.dattn_discrete(u, A.DiscreteMixture(w[None], z)))
    a = model.decode_logits(ids[:1, :-1], lat(pi, Z)).data
    b = model.decode_logits(ids[:1, :-1], lat(pi[perm], Z[:, perm])).data
    post = random_posterior(rng, m, d)
    pp = PosteriorParams(post.alphas.data[perm], post.mus.data[perm], post.log_sigmas.data[perm])
    c = model.decode_logits(ids[:1, :-1], Latent(lambda u: A.dattn_gaussian_mixture(u, post))).data
    e = model.decode_logits(ids[:1, :-1], Latent(lambda u: A.dattn_gaussian_mixture(u, pp))).data
    return _le(max(float(np.max(np.abs(a - b))), float(np.max(np.abs(c - e)))), 1e-9)


@check("model.vts_mask", "model")
def _vts():
    ok = True
    for S in (0.5, 0.25, 0.3):
        for n in range(1, 30):
            keep = stride_keep(n, S)
            dropped = np.flatnonzero(~keep)
            expect = int(np.floor(n * S))
            ok &= len(dropped) == expect and np.all(np.diff(dropped) >= int(1 / S) - 1 if len(dropped) > 1 else True)
            ok &= np.array_equal(keep, stride_keep(n, S))
    half = [int(stride_keep(n, 0.5).sum()) == math.ceil(n / 2) for n in range(1, 40)]
    ok &= all(half)
    model, ids, lengths = micro_model("VTS", dropout=0.0)
    model.eval()
    h1 = model.encode(ids, lengths)
    lat1 = model.latent(h1, lengths)
    rng = np.random.default_rng(0)
    ids2 = np.where(ids > 3, rng.integers(4, 10, ids.shape), ids)
    lat2 = model.latent(model.encode(ids2, lengths), lengths)
    ok &= np.array_equal(lat1.retained, lat2.retained)
    return (bool(ok), 0.0 if ok else 1.0, 0.0, "even spacing, ceil(n/2) kept at S=0.5, content independent")


# ---------------------------------------------------------------- harness

def _tiny_run_config(seed: int = 7):
    from .config import RunConfig

    return RunConfig(seed=seed, steps=40, log_every=10, n_sentences=48, n_valid=16, synth_vocab=20,
                     min_tokens=3, max_tokens=8, model_dim=8, ff_dim=16, max_len=16,
                     lambda_d_prime=1.0, lambda_g_prime=0.1)


@check("harness.cli_determinism", "harness")
def _cli_det():
    import tempfile
    from pathlib import Path

    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for k in range(2):
            out = Path(tmp) / f"r{k}"
            cfgp = Path(tmp) / "c.txt"
            cfgp.write_text(_tiny_run_config().dump())
            code = main(["train", "--config", str(cfgp), "--seed", "7", "--out", str(out)])
            outs.append(((out / "metrics.csv").read_bytes(), (out / "eval.csv").read_bytes(), code))
        same = outs[0] == outs[1] and outs[0][2] == 0
    return (same, 0.0 if same else 1.0, 0.0, "byte-identical metrics.csv and eval.csv")


@check("harness.roundtrip", "harness")
def _roundtrip():
    import tempfile
    from pathlib import Path

    from ..model import load_checkpoint
    from ..model.train import evaluate_loss
    from .runs import load_corpora, run_train

    cfg = _tiny_run_config()
    with tempfile.TemporaryDirectory() as tmp:
        summary = run_train(cfg, tmp)
        model, _ = load_checkpoint(Path(tmp) / "model.ckpt")
        _, valid = load_corpora(cfg)
        after = evaluate_loss(model, valid.sentences)["total"]
    return _le(abs(after - summary["valid_total"]), 1e-9)


@check("harness.manifest", "harness")
def _manifest():
    missing = sorted(set(MANIFEST) - set(_REGISTRY))
    extra = sorted(set(_REGISTRY) - set(MANIFEST))
    return (not missing and not extra, float(len(missing) + len(extra)), 0.0,
            f"missing {missing} extra {extra}" if missing or extra else f"{len(MANIFEST)} invariants covered")


# ---------------------------------------------------------------- driver

def manifest_problems() -> list[str]:
    return sorted(set(MANIFEST) ^ set(_REGISTRY))


def checks_for(suite: str) -> list[str]:
    if suite == "all":
        return list(MANIFEST)
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}")
    return [cid for cid in MANIFEST if _REGISTRY[cid][0] == suite]


def run_check(cid: str) -> CheckResult:
    suite, fn = _REGISTRY[cid]
    t0 = time.perf_counter()
    try:
        passed, measured, bound, detail = fn()
    except Exception as e:  # a crashing check is a failed check, reported with its error
        passed, measured, bound, detail = False, float("nan"), float("nan"), f"error: {type(e).__name__}: {e}"
    return CheckResult(cid, suite, bool(passed), measured, bound, detail, time.perf_counter() - t0)


def run_suite(suite: str = "all", echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    problems = manifest_problems()
    if problems:
        raise RuntimeError(f"verification manifest and registry disagree: {problems}")
    results = []
    for cid in checks_for(suite):
        r = run_check(cid)
        results.append(r)
        if echo is not None:
            echo(r.line())
    return results


__all__ = ["CheckResult", "MANIFEST", "SUITES", "run_suite", "run_check", "checks_for", "manifest_problems",
           "ks_two_sample", "beta_marginal_pvalue", "fdp_weight_errors", "kl_mc_zscores", "combined_form",
           "equivalence_error", "quadrature_errors", "quadrature_reference", "sampler_gradient_errors",
           "kl_gradient_error", "attention_gradient_error", "layer_gradient_error", "full_model_gradient_errors",
           "random_posterior", "nu_sweep", "micro_model"]
