"""Split conformal prediction with quantile-regression thresholds and coverage diagnostics."""

from .bounds import (
    BoundQuery,
    bernstein_gamma,
    compute_bound,
    dkw_epsilon,
    group_deviation,
    hoeffding_failure_prob,
    hoeffding_gamma,
    randomized_weighted_epsilon,
    sharp_bounds,
    weighted_coverage_bounds,
)
from .conformal import (
    ConfidenceRule,
    CorrectionPolicy,
    calibrate_adaptive,
    calibrate_static,
    calibrate_two_sided,
    correct_level,
    covers,
    covers_many,
    interval_width,
    interval_widths,
    rule_from_json,
    rule_to_json,
)
from .coverage import CoverageReport, WeightSpec, evaluate_coverage
from .errors import (
    ConformalError,
    InfeasibleCorrectionError,
    InvalidInputError,
    UnboundedProblemError,
    UnsupportedOperationError,
)
from .features import FeatureMap, bin_map, constant_map, group_map, identity_map, projection_map, sign_map
from .fullconf import GridSpec, calibrate_full_grid, full_conformal_membership, full_conformal_upper
from .qr import CalibrationSample, QuantileFit, fit_quantile_regression
from .scores import JitterSpec, empirical_quantile, enlarged_quantile, jitter_scores, pinball_loss

__version__ = "0.1.0"

__all__ = [
    "BoundQuery", "bernstein_gamma", "compute_bound", "dkw_epsilon", "group_deviation",
    "hoeffding_failure_prob", "hoeffding_gamma", "randomized_weighted_epsilon", "sharp_bounds",
    "weighted_coverage_bounds",
    "ConfidenceRule", "CorrectionPolicy", "calibrate_adaptive", "calibrate_static", "calibrate_two_sided",
    "correct_level", "covers", "covers_many", "interval_width", "interval_widths", "rule_from_json",
    "rule_to_json",
    "CoverageReport", "WeightSpec", "evaluate_coverage",
    "ConformalError", "InfeasibleCorrectionError", "InvalidInputError", "UnboundedProblemError",
    "UnsupportedOperationError",
    "FeatureMap", "bin_map", "constant_map", "group_map", "identity_map", "projection_map", "sign_map",
    "GridSpec", "calibrate_full_grid", "full_conformal_membership", "full_conformal_upper",
    "CalibrationSample", "QuantileFit", "fit_quantile_regression",
    "JitterSpec", "empirical_quantile", "enlarged_quantile", "jitter_scores", "pinball_loss",
]
