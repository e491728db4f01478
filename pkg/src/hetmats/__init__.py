"""Bootstrap-calibrated tests and confidence regions for heteroscedastic
multivariate group comparisons.

The package centres on a quadratic form in the group mean vectors that
standardises by the empirical variances only, so it stays well defined when
group covariance matrices are singular and needs no homoscedasticity
assumption. Calibration is by parametric, wild or nonparametric bootstrap
(or by the plug-in weighted chi-square limit law); the same machinery yields
confidence ellipsoids and simultaneous confidence intervals for contrasts of
the group means, a Wald-type and a trace-normalised companion statistic, and
a Monte Carlo harness for factorial simulation studies.
"""

from __future__ import annotations

from hetmats.inference import (
    ConfidenceEllipsoid,
    SimultaneousCIs,
    confidence_region_test,
    ellipsoid,
    ellipsoid_at_quantile,
    simultaneous_cis,
)
from hetmats.model import DegenerateVarianceError, EstimatorSet, GroupedSample, estimate
from hetmats.resample import (
    BootstrapConfig,
    BootstrapResult,
    bootstrap_aggregate,
    bootstrap_test,
    nonparametric_resample,
    parametric_resample,
    replicate_quantile,
    wild_resample,
)
from hetmats.simstudy import (
    SimulationConfig,
    StudyReport,
    covariance_setting,
    error_sampler,
    generate_dataset,
    run_power_study,
    run_study,
)
from hetmats.stats import (
    HypothesisSpec,
    LimitSpec,
    ats_f,
    limit_weights,
    mats,
    one_way_hypothesis,
    sample_limit,
    two_way_hypotheses,
    wts,
    wts_chi2_pvalue,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "ConfidenceEllipsoid",
    "DegenerateVarianceError",
    "EstimatorSet",
    "GroupedSample",
    "HypothesisSpec",
    "LimitSpec",
    "SimulationConfig",
    "SimultaneousCIs",
    "StudyReport",
    "__version__",
    "ats_f",
    "bootstrap_aggregate",
    "bootstrap_test",
    "confidence_region_test",
    "covariance_setting",
    "ellipsoid",
    "ellipsoid_at_quantile",
    "error_sampler",
    "estimate",
    "generate_dataset",
    "limit_weights",
    "mats",
    "nonparametric_resample",
    "one_way_hypothesis",
    "parametric_resample",
    "replicate_quantile",
    "run_power_study",
    "run_study",
    "sample_limit",
    "simultaneous_cis",
    "two_way_hypotheses",
    "wild_resample",
    "wts",
    "wts_chi2_pvalue",
]
