"""Distributional diagnostics, robustness procedures and panel regression."""

from .diagnostics import (
    TestResult,
    embedding_correlation,
    frechet_gaussian,
    js_divergence,
    ks_two_sample,
    mad_outlier_screen,
    mahalanobis,
    pearson_corr,
    wilcoxon_rank_sum,
)
from .fixed_effects import FixedEffectsResult, fixed_effects_regression, within_estimator
from .robustness import (
    RobustnessReport,
    benchmark_correlations,
    bootstrap_draws,
    bootstrap_retrain,
    rolling_window_eds,
    scheme_sensitivity,
)
from .validation import ValidationReport, validate_fidelity

__all__ = [
    "FixedEffectsResult",
    "RobustnessReport",
    "TestResult",
    "ValidationReport",
    "benchmark_correlations",
    "bootstrap_draws",
    "bootstrap_retrain",
    "embedding_correlation",
    "fixed_effects_regression",
    "frechet_gaussian",
    "js_divergence",
    "ks_two_sample",
    "mad_outlier_screen",
    "mahalanobis",
    "pearson_corr",
    "rolling_window_eds",
    "scheme_sensitivity",
    "validate_fidelity",
    "wilcoxon_rank_sum",
    "within_estimator",
]
