"""Grid-discretized full conformal baseline.

For each candidate score t on a grid, refit the quantile regression on the
calibration sample augmented with (phi_test, t) and accept t when
t <= h_t(phi_test). If t is rejected the augmented point sits above the fit
and raising t further leaves that fit optimal, so the accepted set is a
down-set of the grid. ``full_conformal_upper`` uses that to bisect.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConformalError, InvalidInputError
from .qr import DEFAULT_TOL, CalibrationSample, fit_quantile_regression
from .scores import check_alpha

DEFAULT_GRID_POINTS = 512


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    num_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidInputError("grid needs finite lo < hi")
        if self.num_points < 2:
            raise InvalidInputError("grid needs at least two points")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.num_points)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.num_points - 1)

    @classmethod
    def for_scores(cls, scores, num_points: int = DEFAULT_GRID_POINTS) -> "GridSpec":
        """[min - 0.1 range, max + 0.5 range], widened to unit range for constant scores."""
        s = np.asarray(scores, dtype=float)
        lo, hi = float(s.min()), float(s.max())
        rng = hi - lo if hi > lo else 1.0
        return cls(lo - 0.1 * rng, hi + 0.5 * rng, num_points)


@dataclass(frozen=True)
class FullConformalResult:
    grid: np.ndarray
    accepted: np.ndarray
    failed: np.ndarray

    @property
    def upper(self) -> float:
        """Largest accepted candidate, or -inf when nothing is accepted."""
        ok = np.flatnonzero(self.accepted)
        return float(self.grid[ok[-1]]) if ok.size else -np.inf


class _Refitter:
    """Refits on the augmented sample, optionally carrying the previous basis."""

    def __init__(self, sample: CalibrationSample, phi_test, alpha: float, tol: float, warm: bool):
        phi = np.asarray(phi_test, dtype=float).reshape(-1)
        if phi.size != sample.d:
            raise InvalidInputError(f"phi_test has {phi.size} coordinates, expected {sample.d}")
        self.phi = phi
        self.base = sample.augmented(phi, float(sample.scores[0]))
        self.alpha = alpha
        self.tol = tol
        self.warm = warm
        self.basis: tuple[int, ...] | None = None

    def accepts(self, t: float) -> bool:
        s = np.append(self.base.scores[:-1], t)
        fit = fit_quantile_regression(
            self.base.with_scores(s), self.alpha, self.tol,
            warm_basis=self.basis if self.warm else None,
        )
        if self.warm:
            self.basis = fit.basis
        return bool(t <= float(self.phi @ fit.theta) + self.tol * (1.0 + abs(t)))


def _check_grid(sample: CalibrationSample, grid: GridSpec):
    if grid.lo > sample.scores.min() or grid.hi < sample.scores.max():
        warnings.warn("grid does not cover the observed score range", RuntimeWarning, stacklevel=3)


def full_conformal_membership(
    sample: CalibrationSample,
    phi_test,
    alpha: float,
    grid: GridSpec | None = None,
    *,
    warm_start: bool = True,
    tol: float = DEFAULT_TOL,
) -> FullConformalResult:
    """Acceptance mask over every grid candidate (one refit per candidate)."""
    alpha = check_alpha(alpha)
    grid = grid or GridSpec.for_scores(sample.scores)
    _check_grid(sample, grid)
    refit = _Refitter(sample, phi_test, alpha, tol, warm_start)
    values = grid.values
    accepted = np.zeros(values.size, dtype=bool)
    failed = np.zeros(values.size, dtype=bool)
    for k, t in enumerate(values):
        try:
            accepted[k] = refit.accepts(float(t))
        except (ConformalError, np.linalg.LinAlgError):
            failed[k] = True
            refit.basis = None
    return FullConformalResult(values, accepted, failed)


def full_conformal_upper(
    sample: CalibrationSample,
    phi_test,
    alpha: float,
    grid: GridSpec | None = None,
    *,
    tol: float = DEFAULT_TOL,
) -> float:
    """Upper boundary of the accepted set by bisection over the grid.

    Returns -inf if even the lowest candidate is rejected.
    """
    alpha = check_alpha(alpha)
    grid = grid or GridSpec.for_scores(sample.scores)
    _check_grid(sample, grid)
    refit = _Refitter(sample, phi_test, alpha, tol, warm=True)
    values = grid.values
    if refit.accepts(float(values[-1])):
        warnings.warn("largest grid candidate accepted; grid is too narrow", RuntimeWarning, stacklevel=2)
        return float(values[-1])
    if not refit.accepts(float(values[0])):
        return -np.inf
    lo, hi = 0, values.size - 1  # values[lo] accepted, values[hi] rejected
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if refit.accepts(float(values[mid])):
            lo = mid
        else:
            hi = mid
    return float(values[lo])


def full_conformal_thresholds(rule, features) -> np.ndarray:
    """Per-row upper thresholds for a grid-full-conformal rule.

    Rows with identical features share one computation.
    """
    F = np.asarray(features, dtype=float)
    sample = rule.calibration
    grid = GridSpec.for_scores(sample.scores, rule.grid_points)
    uniq, inverse = np.unique(F, axis=0, return_inverse=True)
    ups = np.array([full_conformal_upper(sample, row, rule.alpha_fitted, grid) for row in uniq])
    return ups[np.asarray(inverse).reshape(-1)]


def calibrate_full_grid(sample: CalibrationSample, alpha: float, num_points: int = DEFAULT_GRID_POINTS, *, feature_map=None, score_kind=None):
    from .conformal import ConfidenceRule

    alpha = check_alpha(alpha)
    return ConfidenceRule(
        "grid-full-conformal", alpha_desired=alpha, alpha_fitted=alpha, feature_map=feature_map,
        calibration=sample, grid_points=num_points, score_kind=score_kind,
    )
