import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvib import attention as A
from nvib.harness.verify import (attention_gradient_error, equivalence_error, quadrature_errors,
                                 quadrature_reference, random_posterior)
from nvib.numerics import ContractError, DimensionError
from nvib.posterior import PosteriorParams


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def test_attn_matches_direct_formula():
    rng = np.random.default_rng(0)
    Z, u = rng.normal(size=(5, 4)), rng.normal(size=(3, 4))
    ref = _softmax(u @ Z.T / math.sqrt(4)) @ Z
    np.testing.assert_allclose(A.attn(u, Z).data, ref, atol=1e-14)


def test_attn_single_key_returns_it():
    Z = np.array([[1.0, -2.0, 0.5]])
    np.testing.assert_allclose(A.attn(np.array([5.0, 1.0, 1.0]), Z).data, Z[0])


def test_attn_dimension_mismatch():
    with pytest.raises(DimensionError):
        A.attn(np.ones(3), np.ones((2, 4)))


def test_impulse_weights():
    Z = np.array([[0.0, 0.0], [1.0, 1.0]])
    w = A.impulse_mixture(Z).weights.data
    expect = _softmax(np.array([0.0, 2.0 / (2 * math.sqrt(2))]))
    np.testing.assert_allclose(w, expect, atol=1e-15)


def test_equivalence_on_1000_instances():
    assert equivalence_error() < 1e-9


@settings(max_examples=100)
@given(st.integers(1, 16), st.integers(1, 32), st.integers(0, 10_000))
def test_equivalence_property(n, p, seed):
    rng = np.random.default_rng(seed)
    Z, u = rng.normal(size=(n, p)) * 3, rng.normal(size=p) * 3
    np.testing.assert_allclose(A.dattn_discrete(u, A.impulse_mixture(Z)).data, A.attn(u, Z).data, atol=1e-9)


def test_discrete_uniform_weights_match_formula():
    rng = np.random.default_rng(1)
    Z, u = rng.normal(size=(4, 3)), rng.normal(size=3)
    pi = np.full(4, 0.25)
    logits = np.log(pi) + Z @ u / math.sqrt(3) - (Z ** 2).sum(1) / (2 * math.sqrt(3))
    np.testing.assert_allclose(A.dattn_discrete(u, A.DiscreteMixture(pi, Z)).data, _softmax(logits) @ Z,
                               atol=1e-14)


def test_discrete_mixture_validation():
    with pytest.raises(DimensionError):
        A.DiscreteMixture(np.ones(3) / 3, np.ones((2, 2)))
    with pytest.raises(ContractError):
        A.DiscreteMixture(np.ones(0), np.ones((0, 2)))


def test_gaussian_mixture_single_sharp_component():
    post = PosteriorParams.from_arrays([1.0], [[2.0, -1.0]], [[1e-6, 1e-6]])
    # log sigma is clamped at -8, so the residual pull towards u is about |u - mu| e^-16 / sqrt(sqrt(d))
    np.testing.assert_allclose(A.dattn_gaussian_mixture(np.array([10.0, 3.0]), post).data, [2, -1], atol=1e-5)


def test_gaussian_mixture_symmetric_pair():
    post = PosteriorParams.from_arrays([1.0, 1.0], [[-1.0], [1.0]], [[0.5], [0.5]])
    u = np.array([0.0])
    pts = A.interpolants(u, post).data[0]
    np.testing.assert_allclose(A.dattn_gaussian_mixture(u, post).data, pts.mean(axis=0), atol=1e-15)


def test_gaussian_mixture_matches_quadrature():
    assert quadrature_errors().max() < 1e-3


def test_quadrature_oracle_single_gaussian():
    # conjugate Gaussian: posterior mean (u/s + mu/sig^2) / (1/s + 1/sig^2) with s = sqrt(d) = 1
    got = quadrature_reference(1.5, [1.0], [0.2], [0.8])
    expect = (1.5 + 0.2 / 0.64) / (1 + 1 / 0.64)
    assert got == pytest.approx(expect, abs=1e-8)


def test_gaussian_mixture_permutation_invariant():
    rng = np.random.default_rng(2)
    post = random_posterior(rng, 6, 3)
    perm = rng.permutation(6)
    pp = PosteriorParams(post.alphas.data[perm], post.mus.data[perm], post.log_sigmas.data[perm])
    u = rng.normal(size=(4, 3))
    np.testing.assert_allclose(A.dattn_gaussian_mixture(u, post).data, A.dattn_gaussian_mixture(u, pp).data,
                               atol=1e-12)


def test_masked_components_get_zero_weight():
    post = PosteriorParams.from_arrays([0.0, 2.0, 0.0, 1.0], np.arange(8.0).reshape(4, 2), np.ones((4, 2)))
    w, _, _ = A.gaussian_mixture_weights(np.zeros((3, 2)), post.alphas, post.mus, post.sigmas)
    assert np.all(w.data[:, [0, 2]] == 0.0)


def test_all_masked_is_an_error():
    with pytest.raises(ContractError):
        A.gaussian_mixture_weights(np.zeros(2), np.zeros(2), np.zeros((2, 2)), np.ones((2, 2)))


def test_batched_matches_unbatched():
    rng = np.random.default_rng(3)
    posts = [random_posterior(rng, 5, 3) for _ in range(2)]
    u = rng.normal(size=(2, 4, 3))
    batched = PosteriorParams(np.stack([p.alphas.data for p in posts]), np.stack([p.mus.data for p in posts]),
                              np.stack([p.log_sigmas.data for p in posts]))
    out = A.dattn_gaussian_mixture(u, batched).data
    for b in range(2):
        np.testing.assert_allclose(out[b], A.dattn_gaussian_mixture(u[b], posts[b]).data, atol=1e-13)


def test_query_in_z_space():
    rng = np.random.default_rng(4)
    wq, wk, wv = rng.normal(size=(3, 5, 4))
    up = rng.normal(size=(2, 5))
    np.testing.assert_allclose(A.ProjectionWeights(wq, wk, wv).query_in_z_space(up).data, up @ wq @ wk.T)


@pytest.mark.parametrize("seed", range(5))
def test_attention_gradients(seed):
    assert attention_gradient_error(seed) < 1e-5
