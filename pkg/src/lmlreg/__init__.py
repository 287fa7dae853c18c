"""Log-mean and log-mean-linear regression for multivariate binary responses.

The package models the joint distribution of binary responses given binary
covariates through regressions on two link scales — the log of the mean
parameters (lm) and their log-linear expansion (lml) — and provides
constrained maximum-likelihood fitting, relative-risk summaries, implied
conditional-independence reporting, and stepwise model selection.
"""

from .inference import (
    ConvergenceError,
    CountTable,
    DataError,
    FitOptions,
    FitResult,
    ModelSpec,
    deviance,
    fit,
    induced_mu_stats,
    loglik,
    simulate,
    wald_tests,
)
from .lattice import (
    LatticeMatrix,
    Subset,
    SubsetLattice,
    mobius_matrix,
    mobius_transform,
    mobius_transform_cols,
    subset_of_mask,
    zeta_matrix,
    zeta_transform,
    zeta_transform_cols,
)
from .params import (
    BoundaryError,
    ParamMatrix,
    ValidationError,
    beta_from_pi,
    beta_gamma_from_beta_mu,
    beta_mu_from_beta_gamma,
    coeffs_from_link,
    gamma_from_mu,
    link_from_coeffs,
    mu_from_gamma,
    mu_from_pi,
    pi_from_beta,
    pi_from_mu,
    validate,
)
from .risk import (
    RiskEntry,
    RiskReport,
    implied_covariate_independencies,
    implied_response_independencies,
    log_reference_rr,
    log_relative_risk,
    log_rr_ratio,
    reference_coeffs,
    risk_report,
)
from .selection import (
    AverageEffect,
    SelectionStep,
    SelectionTrace,
    average_effects,
    backward_staged_selection,
    forward_margin_selection,
    pattern_weights,
)

__version__ = "0.1.0"

__all__ = [
    "AverageEffect",
    "BoundaryError",
    "ConvergenceError",
    "CountTable",
    "DataError",
    "FitOptions",
    "FitResult",
    "LatticeMatrix",
    "ModelSpec",
    "ParamMatrix",
    "RiskEntry",
    "RiskReport",
    "SelectionStep",
    "SelectionTrace",
    "Subset",
    "SubsetLattice",
    "ValidationError",
    "average_effects",
    "backward_staged_selection",
    "beta_from_pi",
    "beta_gamma_from_beta_mu",
    "beta_mu_from_beta_gamma",
    "coeffs_from_link",
    "deviance",
    "fit",
    "forward_margin_selection",
    "gamma_from_mu",
    "implied_covariate_independencies",
    "implied_response_independencies",
    "induced_mu_stats",
    "link_from_coeffs",
    "log_reference_rr",
    "log_relative_risk",
    "log_rr_ratio",
    "loglik",
    "mobius_matrix",
    "mobius_transform",
    "mobius_transform_cols",
    "mu_from_gamma",
    "mu_from_pi",
    "pattern_weights",
    "pi_from_beta",
    "pi_from_mu",
    "reference_coeffs",
    "risk_report",
    "simulate",
    "subset_of_mask",
    "validate",
    "wald_tests",
    "zeta_matrix",
    "zeta_transform",
    "zeta_transform_cols",
    "__version__",
]
