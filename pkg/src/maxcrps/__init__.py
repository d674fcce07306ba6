"""Simulation and CRPS-based fitting of max-stable models.

The public surface: special functions and Frechet utilities, the
closed-form CRPS, three max-stable families with samplers, the CRPS
M-estimator with sandwich confidence intervals, and a replication-study
harness behind the ``maxcrps`` CLI.
"""

from .crps import CrpsTerm, crps_frechet, crps_frechet_dv, crps_objective, expected_crps
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DomainError,
    NumericalError,
)
from .estimator import (
    DirectionSet,
    FitOptions,
    FitResult,
    ProjectionMatrix,
    SandwichCovariance,
    bread_matrix,
    build_direction_set,
    crps_estimate,
    fit_continuous,
    fit_finite,
    meat_matrix,
    project,
    sandwich,
)
from .models import (
    CorrelationFn,
    LogisticModel,
    LogisticParams,
    MaxLinearModel,
    MaxLinearSpec,
    MonteCarloValue,
    ParamDomain,
    SchlatherModel,
    SiteSet,
    correlation,
    correlation_matrix,
    covariation,
    extremal_coefficient,
    v_logistic,
    v_logistic_grad,
    v_max_linear,
    v_schlather,
    v_schlather_grad,
)
from .rng import RngStream
from .sampling import (
    ObservationSet,
    read_observations,
    sample_frechet,
    sample_gaussian_field,
    sample_logistic,
    sample_max_linear,
    sample_positive_stable,
    sample_schlather,
)
from .special import (
    FrechetLaw,
    bessel_k,
    erf,
    frechet_cdf,
    frechet_quantile,
    lower_incomplete_gamma_half,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "CorrelationFn",
    "CrpsTerm",
    "DataError",
    "DirectionSet",
    "DomainError",
    "FitOptions",
    "FitResult",
    "FrechetLaw",
    "LogisticModel",
    "LogisticParams",
    "MaxLinearModel",
    "MaxLinearSpec",
    "MonteCarloValue",
    "NumericalError",
    "ObservationSet",
    "ParamDomain",
    "ProjectionMatrix",
    "RngStream",
    "SandwichCovariance",
    "SchlatherModel",
    "SiteSet",
    "bessel_k",
    "bread_matrix",
    "build_direction_set",
    "correlation",
    "correlation_matrix",
    "covariation",
    "crps_estimate",
    "crps_frechet",
    "crps_frechet_dv",
    "crps_objective",
    "erf",
    "expected_crps",
    "extremal_coefficient",
    "fit_continuous",
    "fit_finite",
    "frechet_cdf",
    "frechet_quantile",
    "lower_incomplete_gamma_half",
    "meat_matrix",
    "project",
    "read_observations",
    "sample_frechet",
    "sample_gaussian_field",
    "sample_logistic",
    "sample_max_linear",
    "sample_positive_stable",
    "sample_schlather",
    "sandwich",
    "v_logistic",
    "v_logistic_grad",
    "v_max_linear",
    "v_schlather",
    "v_schlather_grad",
]
