import math

import numpy as np
import pytest

from nvib import attention as A
from nvib.harness.verify import layer_gradient_error, random_posterior
from nvib.layer import (NvibConfig, NvibLayer, nvib_forward_test, nvib_forward_train, nvib_kl, project_posterior,
                        retained_proportion)
from nvib.numerics import DomainError, NoiseSource
from nvib.numerics import tensor as T
from nvib.posterior import PosteriorParams


def _layer(model_dim=6, dim=4, seed=0, **kw):
    return NvibLayer(model_dim, dim, NvibConfig(1.0, 1.0, **kw), NoiseSource(seed))


def test_project_posterior_shapes_and_prior_row():
    layer = _layer()
    post = project_posterior(layer, np.random.default_rng(0).normal(size=(5, 6)))
    assert post.alphas.shape == (6,)
    assert post.mus.shape == (6, 4)
    assert post.alphas.data[-1] == 1.0
    assert np.all(post.mus.data[-1] == 0) and np.all(post.log_sigmas.data[-1] == 0)


def test_relu_masks_negative_preactivation():
    layer = _layer()
    layer.alpha_head.weight.assign(np.zeros_like(layer.alpha_head.weight.data))
    layer.alpha_head.bias.assign(np.array([-0.3]))
    post = project_posterior(layer, np.ones((3, 6)))
    assert np.all(post.alphas.data[:-1] == 0)
    assert retained_proportion(post) == 0.0


def test_log_sigma_zero_gives_unit_sigma_and_clamp():
    layer = _layer()
    layer.log_sigma_head.weight.assign(np.zeros_like(layer.log_sigma_head.weight.data))
    layer.log_sigma_head.bias.assign(np.zeros(4))
    post = project_posterior(layer, np.ones((2, 6)))
    np.testing.assert_array_equal(post.sigmas.data, 1.0)
    layer.log_sigma_head.bias.assign(np.full(4, 30.0))
    assert project_posterior(layer, np.ones((2, 6))).log_sigmas.data[:-1].max() == 8.0


def test_padding_rows_are_masked():
    layer = _layer()
    post = project_posterior(layer, np.random.default_rng(1).normal(size=(2, 5, 6)), lengths=np.array([5, 3]))
    assert np.all(post.alphas.data[1, 3:5] == 0)
    assert np.all(post.alphas.data[:, -1] == 1.0)


def test_prior_only_posterior_samples_one_vector():
    post = PosteriorParams(np.array([0.0, 0.0, 1.0]), np.zeros((3, 2)), np.zeros((3, 2)), lengths=2)
    mix, _ = nvib_forward_train(post, NoiseSource(0), NvibConfig(1.0, 1.0))
    assert mix.weights.shape == (1,)
    assert mix.weights.data[0] == pytest.approx(1.0)


def test_forward_train_deterministic():
    rng = np.random.default_rng(2)
    post = random_posterior(rng, 5, 3)
    cfg = NvibConfig(1.0, 0.5)
    (m1, k1), (m2, k2) = nvib_forward_train(post, NoiseSource(4), cfg), nvib_forward_train(post, NoiseSource(4), cfg)
    np.testing.assert_array_equal(m1.weights.data, m2.weights.data)
    np.testing.assert_array_equal(m1.vectors.data, m2.vectors.data)
    assert float(k1.weighted.data) == float(k2.weighted.data)


def test_mixture_size_counts_unmasked():
    post = PosteriorParams(np.array([1.0, 0.0, 2.0, 0.0, 1.0]), np.zeros((5, 2)), np.zeros((5, 2)))
    mix, _ = nvib_forward_train(post, NoiseSource(0), NvibConfig())
    assert mix.weights.shape == (3,)
    assert abs(mix.weights.data.sum() - 1) < 1e-12


def test_kl_uses_conditional_prior_and_length_scaling():
    rng = np.random.default_rng(3)
    n, d = 4, 3
    post = random_posterior(rng, n + 1, d)
    post = PosteriorParams(post.alphas, post.mus, post.log_sigmas, lengths=n)
    cfg = NvibConfig(2.0, 0.5, delta_p=0.5, alpha0_p=1.5)
    kl = nvib_kl(post, cfg)
    from nvib.divergences import kl_one_sample

    ref = kl_one_sample(post, 1.5 + n * 0.5)
    assert float(kl.l_d.data) == pytest.approx(float(ref.l_d.data), abs=1e-12)
    assert float(kl.weighted.data) == pytest.approx(2.0 / n * float(ref.l_d.data) + 0.5 / (n * d) * float(ref.l_g.data))


def test_unconditional_flag_targets_alpha0_p():
    rng = np.random.default_rng(10)
    post = random_posterior(rng, 5, 3)
    post = PosteriorParams(post.alphas, post.mus, post.log_sigmas, lengths=4)
    from nvib.divergences import kl_one_sample

    kl = nvib_kl(post, NvibConfig(1.0, 1.0, alpha0_p=2.0, conditional_prior=False))
    assert float(kl.l_d.data) == pytest.approx(float(kl_one_sample(post, 2.0).l_d.data), abs=1e-12)


def test_unconditional_ld_favours_fewer_components():
    # at a fixed total the conditional target is indifferent to sparsity; alpha0_p = 1 is not
    def ld(tok, cond):
        a = np.array(tok + [1.0])
        post = PosteriorParams(a, np.zeros((len(a), 2)), np.zeros((len(a), 2)), lengths=10)
        return float(nvib_kl(post, NvibConfig(1.0, 0.0, conditional_prior=cond)).l_d.data)

    assert ld([1.0] * 10, True) == pytest.approx(ld([2.0] * 5, True), abs=1e-10)
    assert ld([2.0] * 5, False) < ld([1.0] * 10, False)


def test_kl_zero_for_prior_only_at_conditional_concentration():
    cfg = NvibConfig(1.0, 1.0, delta_p=0.5)
    for n in (1, 4, 9):
        alphas = np.zeros(n + 1)
        alphas[-1] = 1.0 + n * 0.5
        post = PosteriorParams(alphas, np.zeros((n + 1, 2)), np.zeros((n + 1, 2)), lengths=n)
        _, kl = nvib_forward_train(post, NoiseSource(0), cfg)
        assert float(kl.total.data) == pytest.approx(0.0, abs=1e-12)


def test_forward_test_collapsed_component():
    post = PosteriorParams(np.array([50.0, 1e-3]), np.array([[1.0, 2.0], [9.0, 9.0]]),
                           np.log(np.array([[1e-3, 1e-3], [1.0, 1.0]])))
    attend = nvib_forward_test(post)
    u = np.random.default_rng(4).normal(size=(5, 2))
    np.testing.assert_allclose(attend(u).data, np.tile([1.0, 2.0], (5, 1)), atol=1e-3)


def test_forward_test_delegates():
    rng = np.random.default_rng(5)
    post = random_posterior(rng, 4, 3)
    u = rng.normal(size=(20, 3))
    np.testing.assert_array_equal(nvib_forward_test(post)(u).data, A.dattn_gaussian_mixture(u, post).data)


def test_train_test_consistency_small_sigma():
    rng = np.random.default_rng(6)
    a, mu = rng.uniform(0.5, 3, 5), rng.normal(size=(5, 4))
    post = PosteriorParams(a, mu, np.full((5, 4), math.log(1e-4)))
    u = rng.normal(size=(3, 4))
    disc = A.dattn_discrete(u, A.DiscreteMixture(a / a.sum(), mu)).data
    np.testing.assert_allclose(nvib_forward_test(post)(u).data, disc, atol=1e-2)


@pytest.mark.parametrize("alphas,expect", [([0, 2, 0, 3], 0.5), ([1, 1, 1], 1.0), ([0, 0], 0.0)])
def test_retained_proportion(alphas, expect):
    a = np.array(alphas + [1.0], dtype=float)
    post = PosteriorParams(a, np.zeros((len(a), 2)), np.zeros((len(a), 2)))
    assert retained_proportion(post) == expect


def test_sampling_never_nan():
    rng = np.random.default_rng(7)
    cfg = NvibConfig(1.0, 1.0)
    for i in range(2000):
        m = int(rng.integers(1, 6))
        a = np.concatenate([np.where(rng.uniform(size=m) < 0.3, 0.0, 10 ** rng.uniform(-4, 3, m)), [1.0]])
        ls = np.vstack([rng.uniform(-8, 8, (m, 2)), np.zeros((1, 2))])
        mu = np.vstack([rng.normal(scale=10 ** rng.uniform(-2, 2), size=(m, 2)), np.zeros((1, 2))])
        mix, kl = nvib_forward_train(PosteriorParams(a, mu, ls, lengths=m), NoiseSource(i), cfg)
        assert np.all(np.isfinite(mix.weights.data)) and np.all(np.isfinite(mix.vectors.data))
        assert np.isfinite(float(kl.weighted.data))


def test_config_validation():
    with pytest.raises(DomainError):
        NvibConfig(-1.0, 0.0)
    with pytest.raises(DomainError):
        NvibConfig(delta_p=0.0)


@pytest.mark.parametrize("seed", range(5))
def test_layer_gradients(seed):
    assert layer_gradient_error(seed) < 1e-4


def test_layer_parameters_get_gradients():
    layer = _layer()
    states = np.random.default_rng(8).normal(size=(4, 6))
    with T.Tape() as tape:
        post = layer(states)
        mix, kl = nvib_forward_train(post, NoiseSource(0), layer.config)
        loss = T.tsum(A.dattn_discrete(np.ones((2, 4)), mix)) + kl.weighted
    grads = tape.backward(loss)
    for name, p in layer.named_parameters():
        assert np.any(grads[p] != 0), name
