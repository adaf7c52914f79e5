"""Causality-aware counterfactual features for linear structural causal models."""

__version__ = "0.1.0"

from .counterfactual import (  # noqa: E402
    PathTarget,
    algorithm1_adjust,
    altered_y_covariance,
    fit_anticausal,
    fit_causal,
    generate_cf_features,
    generate_cf_response,
    intervened_scm,
    population_cf_covariance,
)
from .errors import *  # noqa: E402,F401,F403
from .regression import OlsFit, ols  # noqa: E402
from .scm import (  # noqa: E402
    Dataset,
    LinearScm,
    Role,
    Task,
    covariance_decomposition,
    implied_moments,
    reparameterize,
    simulate,
    total_effects,
    validate,
)
