"""Bayesian low-rank matrix completion with a structured uniform prior."""

__version__ = "0.1.0"

from .bounds import (
    BoundInputs,
    NoiseSpec,
    auxiliary_constants,
    constant_C,
    lambda_star,
    oracle_bound,
)
from .core import (
    ObservationSet,
    SamplingDistribution,
    empirical_risk,
    rmse_per_entry,
    weighted_frobenius_sq,
)
from .errors import CompletionError
from .gibbs import (
    ChainEnsemble,
    GibbsConfig,
    fit_conjugate_prior,
    fit_uniform_prior,
    gibbs_sweep,
    row_conditional,
    sample_conjugate_posterior,
    sample_uniform_posterior,
    select_chain,
)
from .prior import (
    ConjugatePriorConfig,
    FactorPair,
    PriorConfig,
    log_prior_density,
    rank_indicator_pmf,
    sample_prior,
)
from .tmvn import BoxTruncatedGaussian, sample_box_tmvn, sample_truncated_univariate
