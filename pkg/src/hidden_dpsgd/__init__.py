"""Privacy bounds for DP-SGD with hidden intermediate iterates.

Modules:
  specfun: normal tail, quantile and chi-squared CDF.
  hockey_stick: hockey-stick divergence and the Gaussian contraction theta.
  accountant: projected and regularized DP-SGD bounds, delta-to-epsilon conversion.
  oracle: exact 1-D grid discretization used to certify the bounds.
  cli: command-line front end.
"""

from hidden_dpsgd.accountant import (
    INFINITE,
    BoundStep,
    PrivacyPoint,
    RegularizedConfig,
    SamplingScheme,
    SgdBoundConfig,
    compose_linear_bounds,
    delta_limit,
    delta_projected,
    delta_regularized,
    delta_regularized_optimized,
    eps_closed_form_bound,
    eps_from_delta,
    radius_schedule,
)
from hidden_dpsgd.hockey_stick import DiscreteDist, gaussian_contraction, hs_divergence, theta

__all__ = [
    "INFINITE",
    "BoundStep",
    "DiscreteDist",
    "PrivacyPoint",
    "RegularizedConfig",
    "SamplingScheme",
    "SgdBoundConfig",
    "compose_linear_bounds",
    "delta_limit",
    "delta_projected",
    "delta_regularized",
    "delta_regularized_optimized",
    "eps_closed_form_bound",
    "eps_from_delta",
    "gaussian_contraction",
    "hs_divergence",
    "radius_schedule",
    "theta",
]
