"""Dirichlet kernel density estimation on the simplex.

The estimator, its numerical building blocks, the test densities ``f0``,
``f3`` and ``fbeta``, and a Monte Carlo harness for L^p risks and rates.
"""

__version__ = "0.1.0"

from .densities import (
    HolderClass,
    LinearDensity,
    SpikyDensity,
    SpikyDensitySpec,
    UniformDensity,
    empirical_holder_seminorm,
    f0_eval,
    f3_eval,
    f3_exact_bias,
    fbeta_eval,
    make_density,
    sample_density,
    spike_centers,
)
from .errors import (
    ConfigError,
    DegenerateFitError,
    DirichletKDEError,
    DomainError,
    EnvelopeError,
    NumericalError,
    SpecValidationError,
)
from .kernel import (
    BandwidthSpec,
    DirichletKDE,
    DirichletParams,
    EstimateField,
    bandwidth_rule,
    estimate,
    estimate_field,
    estimator_params,
    expected_estimate,
    kernel_log_density,
    kernel_shift_value,
    shift_factorization,
    theoretical_variance_factor,
    variance_approx,
    xi_mean_var,
)
from .risk_lab import (
    OracleBandwidth,
    RateFit,
    RiskExperimentConfig,
    RiskRow,
    RiskTable,
    bias_scaling_experiment,
    fit_rate,
    in_integral,
    lp_error,
    mc_risk,
    minimax_rate,
    optimal_tradeoff_bandwidth,
    preset,
    risk_sweep,
    variance_profile,
)
from .simplex import (
    IntegralEstimate,
    SimplexPoint,
    contains,
    in_interior_region,
    integrate_grid,
    integrate_mc,
    sample_dirichlet,
    sample_uniform,
    volume,
)
from .special_fn import log_gamma, log_stirling_ratio, stirling_ratio
