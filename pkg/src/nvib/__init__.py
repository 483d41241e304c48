"""Nonparametric variational information bottleneck for attention-based embeddings."""

from .attention import (DiscreteMixture, ProjectionWeights, attn, dattn_discrete, dattn_gaussian_mixture,
                        impulse_mixture)
from .distributions import (BoundedDPSpec, GaussianDiag, sample_bfdp, sample_dirichlet, sample_gamma,
                            sample_gaussian)
from .divergences import (KLBreakdown, PriorSpec, conditional_prior, kl_bfdp_expected_kappa,
                          kl_bfdp_given_kappa, kl_dirichlet, kl_gaussian_diag, kl_one_sample)
from .layer import NvibConfig, NvibLayer, nvib_forward_test, nvib_forward_train, project_posterior, retained_proportion
from .posterior import PosteriorParams

__version__ = "0.1.0"
