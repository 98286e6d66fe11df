"""Monte Carlo checks of the finite-sample guarantees against exact coverage.

Scores come from distributions with closed-form CDFs, so the coverage of a
fitted rule conditional on the calibration sample is computed exactly and
only the outer frequency over trials carries Monte Carlo error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..bounds import bernstein_gamma, group_deviation, group_deviation_probability, hoeffding_failure_prob
from ..errors import InvalidInputError
from ..features import group_map, sign_map
from ..qr import CalibrationSample, exceedance, fit_quantile_regression, kkt_residual
from ..rng import stream
from ..scores import JitterSpec, ceil_rank, check_alpha, enlarged_rank, jitter_scores

VERIFY_KINDS = ("marginal", "prop2", "prop3", "corollary1", "corollary3", "lemma8")


@dataclass(frozen=True)
class Check:
    """One tested inequality. Passes iff lo <= value <= hi."""

    name: str
    value: float
    lo: float
    hi: float
    nominal: float
    trials: int
    violations: int | None = None

    @property
    def passed(self) -> bool:
        return self.lo <= self.value <= self.hi


def _rate_check(name: str, violations: int, trials: int, nominal: float) -> Check:
    """Violation frequency against nominal + 3 binomial standard errors."""
    nominal = min(max(nominal, 0.0), 1.0)
    hi = nominal + 3.0 * math.sqrt(nominal * (1.0 - nominal) / trials)
    return Check(name, violations / trials, 0.0, hi, nominal, trials, violations)


@dataclass(frozen=True)
class Verdict:
    kind: str
    checks: tuple[Check, ...]
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def holds_rate(self) -> float:
        """Fraction of trials on which the first check's inequality held."""
        c = self.checks[0]
        return 1.0 - c.value if c.violations is not None else float(c.passed)

    @property
    def nominal_rate(self) -> float:
        return 1.0 - self.checks[0].nominal

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "pass": self.passed,
            "holds_rate": self.holds_rate,
            "nominal_rate": self.nominal_rate,
            "params": self.params,
            "checks": [
                {"name": c.name, "value": c.value, "lo": c.lo, "hi": c.hi, "nominal": c.nominal,
                 "trials": c.trials, "violations": c.violations, "pass": c.passed}
                for c in self.checks
            ],
            **({"extras": self.extras} if self.extras else {}),
        }


def uniform_order_statistics(n: int, k: int, trials: int, seed: int, tag: str, jitter: bool = False) -> np.ndarray:
    """k-th smallest of n Uniform(0,1) scores for each trial (one stream per trial).

    With ``jitter`` each sample is perturbed by the default tiny jitter first,
    and the order statistic is taken on the perturbed scores.
    """
    out = np.empty(trials)
    for i in range(trials):
        s = stream(seed, i, tag).random(n)
        if jitter:
            s = jitter_scores(s, JitterSpec.for_scores(s, seed), trial=i)
        out[i] = np.partition(s, k - 1)[k - 1]
    return out


def _uniform_cdf(t: np.ndarray) -> np.ndarray:
    return np.clip(t, 0.0, 1.0)


def _params(defaults: Mapping[str, Any], params: Mapping[str, Any] | None) -> dict:
    p = dict(defaults)
    for k, v in (params or {}).items():
        if k not in p:
            raise InvalidInputError(f"unknown parameter {k!r}; expected one of {sorted(p)}")
        p[k] = v
    return p


def _verify_marginal(p, trials, seed):
    n, alpha = int(p["n"]), check_alpha(p["alpha"])
    cov = _uniform_cdf(uniform_order_statistics(n, enlarged_rank(n, alpha), trials, seed, "verify/marginal"))
    se = float(cov.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
    mean = float(cov.mean())
    lo, hi = 1.0 - alpha - 3 * se, 1.0 - alpha + 1.0 / (n + 1) + 3 * se
    return (Check("mean-coverage", mean, lo, hi, 1.0 - alpha, trials),), {"mc_se": se}


def _verify_prop2(p, trials, seed):
    n, alpha, gamma = int(p["n"]), check_alpha(p["alpha"]), float(p["gamma"])
    k = ceil_rank(n * (1.0 - alpha))
    cov = _uniform_cdf(uniform_order_statistics(n, k, trials, seed, "verify/prop2"))
    bad = int(np.sum(cov < 1.0 - alpha - gamma))
    return (_rate_check("lower", bad, trials, hoeffding_failure_prob(n, gamma)),), {}


def _verify_prop3(p, trials, seed):
    n, alpha, delta = int(p["n"]), check_alpha(p["alpha"]), float(p["delta"])
    g = bernstein_gamma(n, alpha, delta).gamma
    k = ceil_rank(n * (1.0 - alpha))
    one = _uniform_cdf(uniform_order_statistics(n, k, trials, seed, "verify/prop3"))
    # jittered scores S + U have CDF within the jitter scale of the uniform one
    two = _uniform_cdf(uniform_order_statistics(n, k, trials, seed, "verify/prop3-density", jitter=True))
    bad_one = int(np.sum(one < 1.0 - alpha - g))
    bad_two = int(np.sum((two < 1.0 - alpha - g) | (two > 1.0 - alpha + g)))
    checks = (_rate_check("one-sided", bad_one, trials, delta), _rate_check("two-sided", bad_two, trials, 2 * delta))
    return checks, {"gamma": g}


def _verify_corollary1(p, trials, seed):
    n, alpha, gamma = int(p["n"]), check_alpha(p["alpha"]), float(p["gamma"])
    k = ceil_rank(n * (1.0 - alpha))
    cov = _uniform_cdf(uniform_order_statistics(n, k, trials, seed, "verify/corollary1"))
    bad = int(np.sum((cov < 1.0 - alpha - gamma) | (cov > 1.0 - alpha + 1.0 / n + gamma)))
    return (_rate_check("two-sided-band", bad, trials, 2 * hoeffding_failure_prob(n, gamma)),), {}


def group_scales(k: int) -> np.ndarray:
    """Exponential scale of the score within group g = 0..k-1: 1 + g / 2."""
    return 1.0 + np.arange(k) / 2.0


def group_coverage_trial(n: int, masses: np.ndarray, alpha: float, seed: int, trial: int, tag: str) -> np.ndarray:
    """Exact per-group coverage of a quantile regression on group indicators.

    Labels are drawn with the given masses; within group g the score is
    exponential with scale ``group_scales``. Coverage is 1 - exp(-h_g/scale_g).
    """
    k = masses.size
    rng = stream(seed, trial, tag)
    labels = np.minimum(np.searchsorted(np.cumsum(masses), rng.random(n), side="right"), k - 1)
    scale = group_scales(k)
    scores = rng.exponential(1.0, n) * scale[labels]
    F = group_map(k).transform(labels[:, None])
    fit = fit_quantile_regression(CalibrationSample(F, scores), alpha)
    h = np.eye(k) @ fit.theta
    return np.where(h > 0, -np.expm1(-np.maximum(h, 0.0) / scale), 0.0)


def _verify_corollary3(p, trials, seed):
    n, alpha, t = int(p["n"]), check_alpha(p["alpha"]), float(p["t"])
    masses = np.asarray(p["masses"], dtype=float)
    if masses.ndim != 1 or np.any(masses <= 0) or not math.isclose(masses.sum(), 1.0, rel_tol=1e-9):
        raise InvalidInputError("group masses must be positive and sum to 1")
    d = masses.size
    dev = np.array([group_deviation(n, d, t, m) for m in masses])
    bad = 0
    worst = 0.0
    for i in range(trials):
        cov = group_coverage_trial(n, masses, alpha, seed, i, "verify/corollary3")
        worst = max(worst, float(np.max(1.0 - alpha - cov)))
        bad += int(np.any(cov < 1.0 - alpha - dev))
    nominal = 1.0 - group_deviation_probability(n, t)
    return (_rate_check("all-groups", bad, trials, nominal),), {
        "deviation_terms": dev.tolist(), "worst_undercoverage": worst,
    }


def group_deviation_quantile(n: int, trials: int, *, d: int = 5, alpha: float = 0.1, q: float = 0.9, seed: int = 0) -> float:
    """q-quantile over trials of max_g |coverage_g - (1 - alpha)| for d equal-mass groups."""
    masses = np.full(d, 1.0 / d)
    devs = [
        float(np.max(np.abs(group_coverage_trial(n, masses, alpha, seed, i, f"verify/rate/{n}") - (1 - alpha))))
        for i in range(trials)
    ]
    return float(np.quantile(devs, q))


@dataclass(frozen=True)
class Lemma8Fit:
    n: int
    d: int
    alpha: float
    map_kind: str
    upper_gap: float  # max over u of LHS - alpha * mean w; must be <= 1e-8
    lower_gap: float  # min over u of LHS - (alpha * mean w - b(u) d / n); must be >= -1e-8
    interp: int
    rank: int
    kkt: float
    dual_excess: float


def lemma8_fit(seed: int, trial: int) -> Lemma8Fit:
    """One random fit with jittered (distinct) scores and its identity checks."""
    rng = stream(seed, trial, "verify/lemma8")
    d = int(rng.integers(1, 11))
    n = int(rng.integers(50, 501))
    alpha = float(rng.uniform(0.05, 0.5))
    kind = "group" if rng.random() < 0.5 else "sign"
    if kind == "group":
        labels = rng.integers(0, d, n)
        F = group_map(d).transform(labels[:, None])
        base = labels.astype(float)
    else:
        X = rng.standard_normal((n, max(d - 1, 1)))
        F = sign_map(d - 1).transform(X) if d > 1 else np.ones((n, 1))
        base = F.sum(axis=1)
    raw = base + rng.standard_normal(n) * (1.0 + 0.5 * base)
    scores = jitter_scores(raw, JitterSpec.for_scores(raw, seed), trial=trial)
    sample = CalibrationSample(F, scores)
    fit = fit_quantile_regression(sample, alpha)

    above = exceedance(fit, sample).astype(float)
    dirs = [np.eye(d)[j] for j in range(d)] + [np.abs(rng.standard_normal(d)) for _ in range(3)]
    upper_gap, lower_gap = -np.inf, np.inf
    for u in dirs:
        w = F @ u
        lhs = float(np.mean(w * above))
        upper_gap = max(upper_gap, lhs - alpha * float(np.mean(w)))
        slack = float(np.max(np.abs(w))) * d / n
        lower_gap = min(lower_gap, lhs - (alpha * float(np.mean(w)) - slack))
    eta = fit.eta
    dual_excess = float(max(np.max(eta - alpha), np.max(-(1 - alpha) - eta), 0.0))
    return Lemma8Fit(n, d, alpha, kind, upper_gap, lower_gap, len(fit.interp_set),
                     len(fit.columns), kkt_residual(fit, sample), max(dual_excess, fit.dual_clip))


def _verify_lemma8(p, trials, seed):
    fits = [lemma8_fit(seed, i) for i in range(trials)]
    tol = float(p["tol"])
    up = sum(f.upper_gap > tol for f in fits)
    lo = sum(f.lower_gap < -tol for f in fits)
    interp = sum(f.interp > f.d for f in fits)
    kkt = sum(f.kkt > tol for f in fits)
    dual = sum(f.dual_excess > tol for f in fits)
    checks = (
        _rate_check("upper-identity", up, trials, 0.0),
        _rate_check("lower-identity", lo, trials, 0.0),
        _rate_check("interpolation", interp, trials, 0.0),
        _rate_check("kkt", kkt, trials, 0.0),
        _rate_check("dual-range", dual, trials, 0.0),
    )
    extras = {
        "max_upper_gap": max(f.upper_gap for f in fits),
        "min_lower_gap": min(f.lower_gap for f in fits),
        "max_kkt": max(f.kkt for f in fits),
        "max_interp_minus_d": max(f.interp - f.d for f in fits),
    }
    return checks, extras


_DEFAULTS = {
    "marginal": {"n": 100, "alpha": 0.1},
    "prop2": {"n": 1000, "alpha": 0.1, "gamma": 0.05},
    "prop3": {"n": 1000, "alpha": 0.1, "delta": 0.05},
    "corollary1": {"n": 1000, "alpha": 0.1, "gamma": 0.05},
    "corollary3": {"n": 2000, "alpha": 0.1, "t": 0.02, "masses": (0.1, 0.15, 0.2, 0.25, 0.3)},
    "lemma8": {"tol": 1e-8},
}

_RUNNERS = {
    "marginal": _verify_marginal,
    "prop2": _verify_prop2,
    "prop3": _verify_prop3,
    "corollary1": _verify_corollary1,
    "corollary3": _verify_corollary3,
    "lemma8": _verify_lemma8,
}


def default_params(kind: str) -> dict:
    if kind not in _DEFAULTS:
        raise InvalidInputError(f"unknown verification {kind!r}; known: {', '.join(VERIFY_KINDS)}")
    return dict(_DEFAULTS[kind])


def verify_bound(kind: str, params: Mapping[str, Any] | None = None, trials: int = 2000, seed: int = 0) -> Verdict:
    """Run ``trials`` calibrations and test the inequality named by ``kind``."""
    p = _params(default_params(kind), params)
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    checks, extras = _RUNNERS[kind](p, trials, seed)
    return Verdict(kind, tuple(checks), p, extras)
