import math

import numpy as np
import pytest
import scipy.stats as stats
from hypothesis import given, settings
from hypothesis import strategies as st

from nvib import distributions as D
from nvib.harness.verify import beta_marginal_pvalue, fdp_weight_errors, ks_two_sample, sampler_gradient_errors
from nvib.numerics import DimensionError, DomainError, NoiseSource


def test_sample_gaussian_examples():
    g = D.GaussianDiag(np.array([2.0, -1.0]), np.ones(2))
    np.testing.assert_array_equal(D.sample_gaussian(g, [0.0, 0.0]).data, [2, -1])
    assert D.sample_gaussian(D.GaussianDiag([0.0], [3.0]), [1.0]).data[0] == 3.0
    with pytest.raises(DimensionError):
        D.sample_gaussian(g, [0.0, 0.0, 0.0])


def test_sample_gaussian_moments():
    z = D.sample_gaussian(D.GaussianDiag.standard(1), NoiseSource(0).normal((100_000, 1))).data
    assert abs(z.mean()) < 3 / math.sqrt(1e5)
    assert abs(z.var() - 1) < 0.02


def test_gaussian_diag_rejects_bad_sigma():
    with pytest.raises(DomainError):
        D.GaussianDiag([0.0], [0.0])
    with pytest.raises(DimensionError):
        D.GaussianDiag([0.0, 1.0], [1.0])


def test_inverse_cdf_approx_examples():
    assert D.gamma_inverse_cdf_approx(1.0, 0.5).data == pytest.approx(0.5, rel=1e-14)
    assert D.gamma_inverse_cdf_approx(1.0, 0.9).data == pytest.approx(0.9, rel=1e-14)
    assert D.gamma_inverse_cdf_approx(0.5, 0.25).data == pytest.approx((0.25 * 0.5 * math.sqrt(math.pi)) ** 2,
                                                                     rel=1e-12)
    assert D.gamma_inverse_cdf_approx(0.5, 0.25).data == pytest.approx(0.049087, abs=1e-6)


@pytest.mark.parametrize("alpha,u", [(0.0, 0.5), (-1.0, 0.5), (1.0, 0.0), (1.0, 1.0)])
def test_inverse_cdf_approx_domain(alpha, u):
    with pytest.raises(DomainError):
        D.gamma_inverse_cdf_approx(alpha, u)


def test_inverse_cdf_approx_tiny_alpha_is_finite():
    # direct evaluation of Gamma(1e-4) * 1e-4 would be fine, but u**(1/alpha) underflows; log space keeps it positive
    assert np.isfinite(D.sample_log_gamma(1e-4, (np.array(0.5), np.array(0.0))).data)


def test_gaussian_approx_examples():
    assert D.gamma_gaussian_approx(4.0, 1.0).data == 6.0
    assert D.gamma_gaussian_approx(9.0, 0.0).data == 9.0
    assert D.gamma_gaussian_approx(1.0, -5.0).data == 1e-8


def test_switch_tie_goes_to_gaussian_branch():
    a = D.GAMMA_SWITCH
    out = D.sample_gamma(a, (np.array(0.3), np.array(0.7))).data
    assert out == pytest.approx(a + math.sqrt(a) * 0.7)
    below = D.sample_gamma(0.63, (np.array(0.3), np.array(0.7))).data
    assert below == pytest.approx(D.gamma_inverse_cdf_approx(0.63, 0.3).data)


def test_sample_gamma_large_alpha_moments():
    g = D.sample_gamma(np.full(100_000, 50.0), NoiseSource(1)).data
    assert abs(g.mean() - 50) / 50 < 0.01
    assert abs(g.var() - 50) / 50 < 0.05


def test_sample_gamma_small_alpha_mean():
    # the inverse-CDF approximation has mean (alpha G(alpha))^(1/alpha) / (1 + 1/alpha); at 0.1 that is 0.0552,
    # 45% below the Gamma mean, so a 15% band around 0.1 cannot hold for this formula (see the decisions ledger)
    g = D.sample_gamma(np.full(100_000, 0.1), NoiseSource(2)).data
    assert abs(g.mean() - 0.1) / 0.1 < 0.15


def test_inverse_cdf_approx_mean_matches_its_closed_form():
    for a in (0.1, 0.3, 0.63):
        g = D.sample_gamma(np.full(200_000, a), NoiseSource(3)).data
        expect = math.exp(math.lgamma(a + 1) / a) / (1 + 1 / a)
        assert abs(g.mean() - expect) < 4 * g.std() / math.sqrt(len(g))


def test_sample_gamma_continuous_at_switch():
    m1 = D.sample_gamma(np.full(100_000, 0.63), NoiseSource(4)).data.mean()
    m2 = D.sample_gamma(np.full(100_000, 0.64), NoiseSource(5)).data.mean()
    assert abs(m1 - m2) < 0.05


@settings(max_examples=50)
@given(st.floats(1e-3, 100))
def test_sample_gamma_strictly_positive(a):
    assert np.all(D.sample_gamma(np.full(100, a), NoiseSource(0)).data > 0)


def test_dirichlet_examples():
    pi = D.sample_dirichlet([2.0, 2.0], (np.array([0.4, 0.4]), np.array([0.3, 0.3]))).data
    np.testing.assert_allclose(pi, [0.5, 0.5])
    assert D.sample_dirichlet([3.0], NoiseSource(0)).data[0] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        D.sample_dirichlet([1.0, 0.0], NoiseSource(0))


def test_dirichlet_mean():
    # the reparameterized sampler gives about 0.411 here; see the decisions ledger
    pi = D.sample_dirichlet(np.tile([2.0, 3.0], (100_000, 1)), NoiseSource(6)).data
    assert abs(pi[:, 0].mean() - 0.4) < 0.01


@settings(max_examples=50)
@given(st.lists(st.floats(1e-3, 50), min_size=1, max_size=8), st.integers(0, 1000))
def test_dirichlet_simplex(alphas, seed):
    pi = D.sample_dirichlet(alphas, NoiseSource(seed)).data
    assert np.all(pi >= 0)
    assert abs(pi.sum() - 1) < 1e-12


def test_masked_dirichlet_zero_weight():
    pi = D.sample_dirichlet([1.0, 0.0, 2.0], NoiseSource(0), mask=np.array([True, False, True])).data
    assert pi[1] == 0.0 and pi.sum() == pytest.approx(1.0)


def test_bfdp_single_component():
    spec = D.BoundedDPSpec([(D.GaussianDiag.standard(3), 2.0)], [1])
    s = D.sample_bfdp(spec, NoiseSource(0))
    assert s.weights.data.tolist() == [1.0]
    assert s.vectors.shape == (1, 3)


def test_bfdp_bookkeeping():
    g = D.GaussianDiag.standard(2)
    s = D.sample_bfdp(D.BoundedDPSpec([(g, 1.0), (g, 2.0)], [2, 3]), NoiseSource(0))
    assert s.vectors.shape == (5, 2)
    assert s.component_of.tolist() == [0, 0, 1, 1, 1]
    assert abs(s.weights.data.sum() - 1) < 1e-9


def test_bfdp_rows_come_from_their_component():
    far = D.GaussianDiag(np.full(2, 100.0), np.full(2, 0.1))
    s = D.sample_bfdp(D.BoundedDPSpec([(D.GaussianDiag.standard(2), 1.0), (far, 1.0)], [2, 2]), NoiseSource(1))
    assert np.all(s.vectors.data[s.component_of == 1] > 90)
    assert np.all(np.abs(s.vectors.data[s.component_of == 0]) < 10)


def test_bfdp_expected_component_weight():
    # exact Gamma draws: the reparameterized path is biased (about 0.287 here, from the Gaussian approximation)
    g = D.GaussianDiag.standard(1)
    s = D.sample_bfdp(D.BoundedDPSpec([(g, 1.0), (g, 3.0)], [1, 1]), NoiseSource(2), batch=100_000, exact=True)
    assert abs(s.weights.data[:, 0].mean() - 0.25) < 0.01


def test_bfdp_all_zero_alphas_rejected():
    with pytest.raises(DomainError):
        D.BoundedDPSpec([(D.GaussianDiag.standard(1), 0.0)], [1])


def test_beta_marginal_ks():
    p, z, _ = beta_marginal_pvalue()
    assert p > 0.01
    assert z < 3


def test_ks_helper_against_scipy():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=2000), rng.normal(0.05, 1, size=3000)
    d, p = ks_two_sample(x, y)
    ref = stats.ks_2samp(x, y, method="asymp")
    assert d == pytest.approx(ref.statistic)
    assert p == pytest.approx(ref.pvalue, abs=0.02)


def test_fdp_equal_gaussians_expected_weights():
    assert fdp_weight_errors().max() < 3


def test_samplers_deterministic():
    spec = D.BoundedDPSpec([(D.GaussianDiag.standard(3), 1.2), (D.GaussianDiag.standard(3), 0.4)], [2, 1])
    a, b = D.sample_bfdp(spec, NoiseSource(9)), D.sample_bfdp(spec, NoiseSource(9))
    np.testing.assert_array_equal(a.weights.data, b.weights.data)
    np.testing.assert_array_equal(a.vectors.data, b.vectors.data)


@pytest.mark.parametrize("seed", range(5))
def test_sampler_gradients(seed):
    for name, err in sampler_gradient_errors(seed).items():
        assert err < 1e-5, name
