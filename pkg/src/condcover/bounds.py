"""Closed-form finite-sample coverage bounds.

Where only the rate is known, the absolute constant is a parameter (default 1)
and the returned value is the bound up to that constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidInputError
from .scores import check_alpha


def _check_n(n: int, d: int | None = None):
    if n < 1:
        raise InvalidInputError("n must be positive")
    if d is not None:
        if d < 1:
            raise InvalidInputError("d must be positive")
        if n < d:
            raise InvalidInputError(f"bound requires n >= d (n={n}, d={d})")


def _check_delta(delta: float):
    if not (0.0 < delta < 1.0):
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta!r}")


def hoeffding_failure_prob(n: int, gamma: float) -> float:
    """exp(-2 n gamma^2): chance the static rule undercovers by more than gamma."""
    _check_n(n)
    if gamma < 0:
        raise InvalidInputError("gamma must be nonnegative")
    return math.exp(-2.0 * n * gamma * gamma)


def hoeffding_gamma(n: int, delta: float) -> float:
    """Inverse of :func:`hoeffding_failure_prob`: sqrt(log(1/delta) / (2n))."""
    _check_n(n)
    _check_delta(delta)
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class BernsteinGamma:
    gamma: float
    upper: float


def bernstein_gamma(n: int, alpha: float, delta: float) -> BernsteinGamma:
    """Variance-sensitive slack gamma_n(delta) together with its simpler upper bound.

    alpha may be 0 or 1 here, in which case only the 1/n term survives.
    """
    _check_n(n)
    _check_delta(delta)
    if not (0.0 <= alpha <= 1.0):
        raise InvalidInputError("alpha must lie in [0, 1]")
    L = math.log(1.0 / delta)
    lin = 4.0 * L / (3.0 * n)
    gamma = lin + math.sqrt(lin * lin + 2.0 * alpha * (1.0 - alpha) * L / n)
    upper = 8.0 * L / (3.0 * n) + math.sqrt(2.0 * alpha * (1.0 - alpha) * L / n)
    # sqrt(a + b) <= sqrt(a) + sqrt(b); the slack only covers rounding
    assert gamma <= upper * (1 + 1e-12) + 1e-300, (gamma, upper)
    return BernsteinGamma(gamma, upper)


def dkw_epsilon(n: int, delta: float) -> float:
    """t with 2 exp(-2 n t^2) = delta, i.e. sqrt(log(2/delta) / (2n))."""
    _check_n(n)
    if not (0.0 < delta <= 2.0):
        raise InvalidInputError("delta must lie in (0, 2]")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def _vc_rate(n: int, d: int) -> float:
    return math.sqrt((d / n) * math.log(n / d))


def group_deviation(n: int, d: int, t: float, group_mass: float, c: float = 4.0) -> float:
    """Additive group undercoverage term c / P(G) * (sqrt((d/n) log(n/d)) + t).

    Holds with probability at least 1 - exp(-n t^2). Values >= 1 are vacuous;
    the result grows without bound as the group mass shrinks.
    """
    _check_n(n, d)
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    if not (0.0 < group_mass <= 1.0):
        raise InvalidInputError("group mass must lie in (0, 1]")
    return c / group_mass * (_vc_rate(n, d) + t)


def group_deviation_probability(n: int, t: float) -> float:
    return 1.0 - math.exp(-n * t * t)


def weighted_coverage_bounds(n: int, d: int, t: float, alpha: float, b_phi: float) -> tuple[float, float]:
    """(lower slack, upper slack) for weighted coverage of the fitted rule.

    Lower: c b_phi (rate + t) with c = 2 + alpha/sqrt(d); upper (distinct
    scores): 3 b_phi (rate + t + d/(3n)). Probability 1 - exp(-n t^2).
    """
    _check_n(n, d)
    c = 2.0 + alpha / math.sqrt(d)
    r = _vc_rate(n, d)
    return c * b_phi * (r + t), 3.0 * b_phi * (r + t + d / (3.0 * n))


def randomized_weighted_epsilon(n: int, d: int, t: float, b_phi: float, c: float = 3.0) -> float:
    """Weighted-coverage slack of the jittered rule: c b_phi (rate + d/n + t)."""
    _check_n(n, d)
    return c * b_phi * (_vc_rate(n, d) + d / n + t)


@dataclass(frozen=True)
class SharpBound:
    one_sided: float
    two_sided: float
    c: float
    probability: float
    k_n: float


def sharp_bounds(
    n: int,
    d: int,
    t: float,
    alpha: float,
    b_phi: float,
    b_phi_u: float,
    mean_w: float,
    c: float = 1.0,
) -> SharpBound:
    """Variance-adaptive weighted-coverage slack, one- and two-sided.

    one_sided = c [sqrt(b_phi(u) alpha E<u,phi>) sqrt((d log n + t)/n) + b_phi (d log n + t)/n]
    two_sided = c [b_phi(u) sqrt(alpha) sqrt((d log n + t)/n) + b_phi (d log n + t)/n]

    Both hold with probability 1 - 2 K_n e^{-t} - e^{-d log n - t},
    K_n = 1 + log2 n. The constant c is unknown; values are reported up to it.
    """
    _check_n(n, d)
    if n < 2:
        raise InvalidInputError("bound requires n > 1")
    check_alpha(alpha)
    if t < 0 or b_phi < 0 or b_phi_u < 0 or mean_w < 0:
        raise InvalidInputError("t, b_phi, b_phi_u and mean_w must be nonnegative")
    m = d * math.log(n) + t
    higher = b_phi * m / n
    one = c * (math.sqrt(b_phi_u * alpha * mean_w) * math.sqrt(m / n) + higher)
    two = c * (b_phi_u * math.sqrt(alpha) * math.sqrt(m / n) + higher)
    k_n = 1.0 + math.log2(n)
    prob = 1.0 - 2.0 * k_n * math.exp(-t) - math.exp(-d * math.log(n) - t)
    return SharpBound(one, two, c, prob, k_n)


@dataclass(frozen=True)
class BoundQuery:
    n: int
    d: int = 1
    alpha: float = 0.1
    delta: float | None = None
    gamma: float | None = None
    t: float = 0.0
    b_phi: float | None = None
    b_phi_u: float | None = None
    group_mass: float | None = None
    mean_w: float | None = None
    c: float | None = None


BOUND_KINDS = ("hoeffding", "bernstein", "dkw", "group", "weighted", "sharp")


def compute_bound(kind: str, q: BoundQuery) -> dict:
    """Evaluate one calculator from a query; used by the CLI."""

    def need(name):
        v = getattr(q, name)
        if v is None:
            raise InvalidInputError(f"bound {kind!r} needs --{name.replace('_', '-')}")
        return v

    if kind == "hoeffding":
        if q.gamma is not None:
            return {"gamma": q.gamma, "failure_prob": hoeffding_failure_prob(q.n, q.gamma)}
        return {"delta": need("delta"), "gamma": hoeffding_gamma(q.n, q.delta)}
    if kind == "bernstein":
        b = bernstein_gamma(q.n, q.alpha, need("delta"))
        return {"gamma": b.gamma, "upper": b.upper}
    if kind == "dkw":
        return {"t": dkw_epsilon(q.n, need("delta"))}
    if kind == "group":
        c = 4.0 if q.c is None else q.c
        dev = group_deviation(q.n, q.d, q.t, need("group_mass"), c)
        return {"deviation": dev, "vacuous": dev >= 1.0, "probability": group_deviation_probability(q.n, q.t)}
    if kind == "weighted":
        lo, hi = weighted_coverage_bounds(q.n, q.d, q.t, q.alpha, need("b_phi"))
        return {"lower_slack": lo, "upper_slack": hi, "probability": group_deviation_probability(q.n, q.t)}
    if kind == "sharp":
        sb = sharp_bounds(
            q.n, q.d, q.t, q.alpha, need("b_phi"), need("b_phi_u"), need("mean_w"),
            1.0 if q.c is None else q.c,
        )
        return {"one_sided": sb.one_sided, "two_sided": sb.two_sided, "c": sb.c,
                "probability": sb.probability, "K_n": sb.k_n}
    raise InvalidInputError(f"unknown bound kind {kind!r}; known: {', '.join(BOUND_KINDS)}")
