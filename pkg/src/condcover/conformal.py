"""Calibrated confidence rules and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import InfeasibleCorrectionError, InvalidInputError, UnsupportedOperationError
from .features import FeatureMap, constant_map, feature_map_from_spec
from .qr import DEFAULT_TOL, CalibrationSample, fit_quantile_regression
from .scores import (
    JitterSpec,
    as_scores,
    check_alpha,
    empirical_quantile,
    enlarged_quantile,
    jitter_scores,
)

RULE_SCHEMA_VERSION = 1

RuleKind = Literal["static", "adaptive", "two-sided", "grid-full-conformal"]
CorrectionKind = Literal["none", "naive", "scaling"]
CORRECTIONS = ("none", "naive", "scaling")


@dataclass(frozen=True)
class CorrectionPolicy:
    kind: CorrectionKind
    d: int
    n: int

    def __post_init__(self):
        if self.kind not in CORRECTIONS:
            raise InvalidInputError(f"unknown correction {self.kind!r}")
        if self.d < 1 or self.n < 1:
            raise InvalidInputError("correction needs positive d and n")


_LEVEL_FLOOR = 1e-12


def _first_above(x: float) -> int:
    """Smallest integer strictly greater than x, treating near-integers as exact."""
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r) + 1
    return math.floor(x) + 1


def correct_level(alpha_des: float, policy: CorrectionPolicy) -> float:
    """Level to fit at so that the rule targets miscoverage ``alpha_des``.

    naive:   alpha = (1 + d/n) alpha_des - d/n
    scaling: alpha = (alpha_des - d/(2n)) / (1 - d/n)
    """
    alpha_des = check_alpha(alpha_des, "alpha_des")
    d, n = policy.d, policy.n
    if policy.kind == "none":
        return alpha_des
    if policy.kind == "naive":
        alpha = (1 + d / n) * alpha_des - d / n
        min_n = _first_above(d * (1 - alpha_des) / alpha_des)
    else:
        if n <= d:
            raise InfeasibleCorrectionError(
                f"scaling correction needs n > d (n={n}, d={d})", min_n=d + 1
            )
        alpha = (alpha_des - d / (2 * n)) / (1 - d / n)
        min_n = max(d + 1, _first_above(d / (2 * alpha_des)))
    # at n = min_n - 1 the exact level is 0; rounding can leave a tiny positive value
    if not (_LEVEL_FLOOR < alpha < 1.0) or n < min_n:
        raise InfeasibleCorrectionError(
            f"{policy.kind} correction gives alpha={alpha:.6g} for alpha_des={alpha_des}, "
            f"d={d}, n={n}; needs n >= {min_n}",
            min_n=min_n,
        )
    return alpha


def _policy(correction, sample: CalibrationSample) -> CorrectionPolicy:
    if isinstance(correction, CorrectionPolicy):
        return correction
    return CorrectionPolicy(correction or "none", d=sample.d, n=sample.n)


@dataclass(frozen=True)
class ConfidenceRule:
    """A fitted rule x -> {y : score accepted}.

    ``score_kind`` records how scores relate to y: "absolute" for |y - f(x)|
    (so widths are 2*h(x)), "signed" for y - f(x) or raw y, None if unknown.
    """

    kind: RuleKind
    alpha_desired: float
    alpha_fitted: float
    feature_map: FeatureMap | None = None
    tau: float | None = None
    theta_upper: np.ndarray | None = None
    theta_lower: np.ndarray | None = None
    jitter: JitterSpec | None = None
    score_kind: str | None = None
    crossing: bool = False
    correction: str = "none"
    calibration: CalibrationSample | None = None
    grid_points: int = 512

    def __post_init__(self):
        need = {
            "static": ("tau",),
            "adaptive": ("theta_upper",),
            "two-sided": ("theta_upper", "theta_lower"),
            "grid-full-conformal": ("calibration",),
        }
        if self.kind not in need:
            raise InvalidInputError(f"unknown rule kind {self.kind!r}")
        for name in ("tau", "theta_upper", "theta_lower", "calibration"):
            present = getattr(self, name) is not None
            if present != (name in need[self.kind]):
                raise InvalidInputError(f"{self.kind} rule {'needs' if not present else 'cannot carry'} {name}")
        for name in ("theta_upper", "theta_lower"):
            v = getattr(self, name)
            if v is not None:
                arr = np.array(v, dtype=float).reshape(-1)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int | None:
        if self.theta_upper is not None:
            return self.theta_upper.size
        if self.calibration is not None:
            return self.calibration.d
        return None

    def thresholds(self, features) -> tuple[np.ndarray | None, np.ndarray]:
        """(lower, upper) score thresholds at each feature row; lower is None for one-sided rules."""
        F = np.asarray(features, dtype=float)
        if F.ndim == 1:
            F = F[None, :]
        if self.kind == "static":
            return None, np.full(F.shape[0], float(self.tau))
        if F.shape[1] != self.dim:
            raise InvalidInputError(f"rule expects {self.dim} features, got {F.shape[1]}")
        if self.kind == "adaptive":
            return None, F @ self.theta_upper
        if self.kind == "two-sided":
            return F @ self.theta_lower, F @ self.theta_upper
        from .fullconf import full_conformal_thresholds

        return None, full_conformal_thresholds(self, F)


def calibrate_static(scores, alpha: float, enlarged: bool = True, *, score_kind: str | None = None) -> ConfidenceRule:
    alpha = check_alpha(alpha)
    s = as_scores(scores)
    tau = enlarged_quantile(s, alpha) if enlarged else empirical_quantile(s, 1.0 - alpha)
    return ConfidenceRule(
        "static", alpha_desired=alpha, alpha_fitted=alpha, tau=tau, score_kind=score_kind,
        correction="enlarged" if enlarged else "none",
    )


def calibrate_adaptive(
    sample: CalibrationSample,
    alpha_des: float,
    correction: CorrectionPolicy | str = "none",
    jitter: JitterSpec | None = None,
    *,
    feature_map: FeatureMap | None = None,
    score_kind: str | None = None,
    tol: float = DEFAULT_TOL,
) -> ConfidenceRule:
    """Fit h(x) = <theta, phi(x)> by quantile regression at the corrected level.

    With ``jitter`` the calibration scores are perturbed before fitting and
    the rule keeps the spec so membership can add a fresh perturbation.
    """
    alpha_des = check_alpha(alpha_des, "alpha_des")
    policy = _policy(correction, sample)
    alpha = correct_level(alpha_des, policy)
    fit_sample = sample if jitter is None else sample.with_scores(jitter_scores(sample.scores, jitter))
    fit = fit_quantile_regression(fit_sample, alpha, tol)
    return ConfidenceRule(
        "adaptive",
        alpha_desired=alpha_des,
        alpha_fitted=alpha,
        feature_map=feature_map,
        theta_upper=fit.theta,
        jitter=jitter,
        score_kind=score_kind,
        correction=policy.kind,
    )


def calibrate_two_sided(
    sample: CalibrationSample,
    alpha_des: float,
    correction: CorrectionPolicy | str = "none",
    *,
    feature_map: FeatureMap | None = None,
    tol: float = DEFAULT_TOL,
) -> ConfidenceRule:
    """Two quantile regressions: upper at tail level alpha/2 on S, lower on -S.

    The correction is applied to each tail's target alpha_des/2.
    """
    alpha_des = check_alpha(alpha_des, "alpha_des")
    policy = _policy(correction, sample)
    tail = correct_level(alpha_des / 2, policy)
    upper = fit_quantile_regression(sample, tail, tol)
    lower = fit_quantile_regression(sample.with_scores(-sample.scores), tail, tol)
    theta_lower = -lower.theta
    F = sample.features
    crossing = bool(np.any(F @ theta_lower > F @ upper.theta + tol * (1 + np.abs(sample.scores))))
    return ConfidenceRule(
        "two-sided",
        alpha_desired=alpha_des,
        alpha_fitted=2 * tail,
        feature_map=feature_map,
        theta_upper=upper.theta,
        theta_lower=theta_lower,
        score_kind="signed",
        crossing=crossing,
        correction=policy.kind,
    )


def covers_many(rule: ConfidenceRule, features, scores, rng: np.random.Generator | None = None) -> np.ndarray:
    """Vectorized membership; a jittered rule perturbs thresholds only when ``rng`` is given."""
    s = as_scores(scores)
    lower, upper = rule.thresholds(features)
    if upper.size != s.size:
        raise InvalidInputError(f"{upper.size} feature rows but {s.size} scores")
    if rule.jitter is not None and rng is not None and rule.kind == "adaptive":
        upper = upper + rng.uniform(-rule.jitter.scale, rule.jitter.scale, size=upper.size)
    ok = s <= upper
    if lower is not None:
        ok &= lower <= s
    return ok


def covers(rule: ConfidenceRule, phi_x, score: float, rng: np.random.Generator | None = None) -> bool:
    phi = None if phi_x is None else np.atleast_1d(np.asarray(phi_x, dtype=float))
    if phi is None:
        if rule.kind != "static":
            raise InvalidInputError("non-static rules need phi(x)")
        phi = np.zeros(1)
    return bool(covers_many(rule, phi[None, :], [score], rng)[0])


def interval_widths(rule: ConfidenceRule, features) -> tuple[np.ndarray, np.ndarray]:
    """Widths of the y-intervals and a per-row crossing flag."""
    if rule.kind == "two-sided":
        lower, upper = rule.thresholds(features)
        crossed = lower > upper
        return np.where(crossed, 0.0, upper - lower), crossed
    if rule.score_kind != "absolute":
        raise UnsupportedOperationError(
            f"width of a {rule.kind} rule needs absolute-error score semantics"
        )
    _, upper = rule.thresholds(features)
    crossed = upper < 0
    return np.where(crossed, 0.0, 2.0 * upper), crossed


def interval_width(rule: ConfidenceRule, phi_x) -> float:
    phi = np.atleast_1d(np.asarray(phi_x, dtype=float))
    w, _ = interval_widths(rule, phi[None, :])
    return float(w[0])


# -- serialization ---------------------------------------------------------

def _hex(x: float) -> str:
    return float(x).hex()


def _unhex(v) -> float:
    if isinstance(v, str):
        return float.fromhex(v)
    raise InvalidInputError(f"expected a hex float string, got {v!r}")


def rule_to_dict(rule: ConfidenceRule) -> dict:
    doc: dict = {
        "schema_version": RULE_SCHEMA_VERSION,
        "kind": rule.kind,
        "alpha_desired": _hex(rule.alpha_desired),
        "alpha_fitted": _hex(rule.alpha_fitted),
        "correction": rule.correction,
        "score_kind": rule.score_kind,
        "crossing": rule.crossing,
        "feature_map_name": rule.feature_map.name if rule.feature_map else None,
        "feature_map_params": dict(rule.feature_map.params) if rule.feature_map else None,
    }
    if rule.tau is not None:
        doc["tau"] = _hex(rule.tau)
    if rule.theta_upper is not None:
        doc["theta"] = [_hex(v) for v in rule.theta_upper]
    if rule.theta_lower is not None:
        doc["theta_lower"] = [_hex(v) for v in rule.theta_lower]
    if rule.jitter is not None:
        doc["jitter"] = {"scale": _hex(rule.jitter.scale), "seed": int(rule.jitter.seed)}
    if rule.calibration is not None:
        doc["calibration"] = {
            "features": [[_hex(v) for v in row] for row in rule.calibration.features],
            "scores": [_hex(v) for v in rule.calibration.scores],
        }
        doc["grid_points"] = rule.grid_points
    return doc


def rule_to_json(rule: ConfidenceRule) -> str:
    return json.dumps(rule_to_dict(rule), indent=2)


def rule_from_dict(doc: dict) -> ConfidenceRule:
    if doc.get("schema_version") != RULE_SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported rule schema version {doc.get('schema_version')!r}")
    fmap = None
    if doc.get("feature_map_name"):
        fmap = feature_map_from_spec(doc["feature_map_name"], doc.get("feature_map_params") or {})
    jitter = None
    if doc.get("jitter"):
        jitter = JitterSpec(scale=_unhex(doc["jitter"]["scale"]), seed=int(doc["jitter"]["seed"]))
    calib = None
    if doc.get("calibration"):
        c = doc["calibration"]
        calib = CalibrationSample(
            np.array([[_unhex(v) for v in row] for row in c["features"]]),
            np.array([_unhex(v) for v in c["scores"]]),
        )
    return ConfidenceRule(
        kind=doc["kind"],
        alpha_desired=_unhex(doc["alpha_desired"]),
        alpha_fitted=_unhex(doc["alpha_fitted"]),
        feature_map=fmap,
        tau=_unhex(doc["tau"]) if "tau" in doc else None,
        theta_upper=np.array([_unhex(v) for v in doc["theta"]]) if "theta" in doc else None,
        theta_lower=np.array([_unhex(v) for v in doc["theta_lower"]]) if "theta_lower" in doc else None,
        jitter=jitter,
        score_kind=doc.get("score_kind"),
        crossing=bool(doc.get("crossing", False)),
        correction=doc.get("correction", "none"),
        calibration=calib,
        grid_points=int(doc.get("grid_points", 512)),
    )


def rule_from_json(text: str) -> ConfidenceRule:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"rule file is not valid JSON: {exc}") from None
    try:
        return rule_from_dict(doc)
    except KeyError as exc:
        raise InvalidInputError(f"rule document missing field {exc}") from None


def constant_sample(scores) -> CalibrationSample:
    """Calibration sample with the constant feature phi(x) = 1."""
    s = as_scores(scores)
    return CalibrationSample(constant_map().transform(np.zeros(s.size)), s)


__all__ = [
    "CORRECTIONS",
    "ConfidenceRule",
    "CorrectionPolicy",
    "calibrate_adaptive",
    "calibrate_static",
    "calibrate_two_sided",
    "constant_sample",
    "correct_level",
    "covers",
    "covers_many",
    "interval_width",
    "interval_widths",
    "rule_from_json",
    "rule_to_json",
]
