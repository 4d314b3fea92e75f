"""Likelihood inference for partially observed fast/slow diffusions.

The reduced log-likelihood replaces the observation function by its invariant
mean; the Monte-Carlo log-likelihood weights independent hidden particles.
"""

from msfilter.errors import ConfigError, NumericalError
from msfilter.inference import MleResult, grid_mle, predicted_mle_std, reduced_mle
from msfilter.likelihood import (
    LogLikEstimate,
    clt_statistic,
    filter_mean,
    log_sum_exp,
    mc_log_lik,
    reduced_log_lik,
)
from msfilter.models import ModelSpec, constant_h_model, get_model, ou_max_model, register_model
from msfilter.sde import PathPair, X0Mode, simulate_xy, step_hidden
from msfilter.spectral import (
    SpectralTable,
    eigen_coefficients,
    gh_nodes,
    hermite,
    invariant_mean,
    summability_report,
    u_squared,
    v_squared,
)
from msfilter.stats import KsResult, gaussian_cdf, histogram, ks_test, summarize

__version__ = "0.1.0"
