"""Weak-identification diagnostics for endogenous binary-choice models."""

from .conventional import (
    FirstStageSummary,
    effective_f_test,
    first_stage,
    pruning_ratio,
    rule_of_thumb,
    stock_yogo,
)
from .djtest import DJConfig, DJReport, delta_grid, distort, dj_statistic, dj_test
from .estimators import (
    CuOptions,
    FitResult,
    fit_2scml,
    fit_cugmm,
    j_statistic,
    marginal_effect,
    wald_test,
)
from .model import (
    Dataset,
    ParamEta,
    ParamTheta,
    Standardization,
    rotate_to_eta,
    standardize,
    unrotate_to_theta,
)
from .moments import MomentSystem, default_instruments, evaluate
from .montecarlo import McDesign, McSummary, generate, implied_xi, run_design, size_adjusted_power
from .numerics import RngStream, chi2_quantile, gh_expectation, normal_cdf, normal_pdf

__version__ = "0.1.0"

__all__ = [
    "CuOptions",
    "DJConfig",
    "DJReport",
    "Dataset",
    "FirstStageSummary",
    "FitResult",
    "McDesign",
    "McSummary",
    "MomentSystem",
    "ParamEta",
    "ParamTheta",
    "RngStream",
    "Standardization",
    "chi2_quantile",
    "default_instruments",
    "delta_grid",
    "distort",
    "dj_statistic",
    "dj_test",
    "effective_f_test",
    "evaluate",
    "first_stage",
    "fit_2scml",
    "fit_cugmm",
    "generate",
    "gh_expectation",
    "implied_xi",
    "j_statistic",
    "marginal_effect",
    "normal_cdf",
    "normal_pdf",
    "pruning_ratio",
    "rotate_to_eta",
    "rule_of_thumb",
    "run_design",
    "size_adjusted_power",
    "standardize",
    "stock_yogo",
    "unrotate_to_theta",
    "wald_test",
]
