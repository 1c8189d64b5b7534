"""Noise-design toolkit for differentially private SGD: moments accounting
for subsampled Gaussian, Laplace, and gamma-mixture Laplace mechanisms,
distortion/SNR calculus, constrained noise-parameter optimization, noise
sampling, and a toy DP-SGD demo."""

from .params import (
    AccountingJob,
    GammaPlrvParams,
    GaussianParams,
    LaplaceParams,
    LogMomentCurve,
    MgfDomainViolation,
    OptimizationResult,
    PrivacyTarget,
    validate,
)
from .accountant import (
    account,
    build_curve,
    compose,
    delta_from_epsilon,
    epsilon_from_delta,
    gaussian_subsampled_log_moment,
    laplace_multivariate_log_moment,
    laplace_univariate_log_moment,
    plrv_multivariate_log_moment,
    plrv_univariate_log_moment,
)
from .majorization import MajorizationSet

__all__ = [
    "AccountingJob",
    "GammaPlrvParams",
    "GaussianParams",
    "LaplaceParams",
    "LogMomentCurve",
    "MajorizationSet",
    "MgfDomainViolation",
    "OptimizationResult",
    "PrivacyTarget",
    "account",
    "build_curve",
    "compose",
    "delta_from_epsilon",
    "epsilon_from_delta",
    "gaussian_subsampled_log_moment",
    "laplace_multivariate_log_moment",
    "laplace_univariate_log_moment",
    "plrv_multivariate_log_moment",
    "plrv_univariate_log_moment",
    "validate",
]
