"""Scalar building blocks: pinball loss, order-statistic quantiles, jitter."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .rng import stream

DEFAULT_JITTER_SCALE = 1e-10


def check_alpha(alpha: float, name: str = "alpha") -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise InvalidInputError(f"{name} must lie in (0, 1), got {alpha!r}")
    return alpha


def as_scores(scores: Sequence[float] | np.ndarray, *, allow_empty: bool = False) -> np.ndarray:
    """Validate scores and return them as a 1-D float array.

    NaN and infinite values are rejected here so nothing downstream has to
    think about them.
    """
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0 and not allow_empty:
        raise InvalidInputError("scores must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("scores must be finite")
    return arr


def pinball_loss(t, alpha: float):
    """Quantile loss ``alpha*max(t, 0) + (1 - alpha)*max(-t, 0)``.

    Works elementwise on arrays; a scalar input returns a Python float.
    """
    alpha = check_alpha(alpha)
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("pinball_loss needs finite residuals")
    out = alpha * np.maximum(arr, 0.0) + (1.0 - alpha) * np.maximum(-arr, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def ceil_rank(x: float) -> int:
    """Ceiling that forgives floating-point fuzz, e.g. 0.9 * 20 -> 18."""
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def order_statistic(scores: np.ndarray, k: int) -> float:
    """k-th smallest value (1-indexed)."""
    return float(np.partition(scores, k - 1)[k - 1])


def empirical_quantile(scores, beta: float) -> float:
    """Type-1 empirical quantile: the order statistic of rank ceil(beta * n).

    No interpolation between order statistics, so the result is always one of
    the inputs.
    """
    arr = as_scores(scores)
    beta = float(beta)
    if not (0.0 < beta <= 1.0):
        raise InvalidInputError(f"beta must lie in (0, 1], got {beta!r}")
    n = arr.size
    k = min(n, max(1, ceil_rank(beta * n)))
    return order_statistic(arr, k)


def enlarged_rank(n: int, alpha: float) -> int:
    """Rank ceil((1 - alpha)(n + 1)), capped at n."""
    return min(n, max(1, ceil_rank((1.0 - alpha) * (n + 1))))


def enlarged_quantile(scores, alpha: float) -> float:
    """Split-conformal threshold: the empirical quantile at level (1-alpha)(1+1/n).

    Equivalent to ``empirical_quantile(scores, min(1, (1-alpha)(1+1/n)))``;
    the rank is computed from (1-alpha)(n+1) directly to dodge rounding.
    """
    arr = as_scores(scores)
    alpha = check_alpha(alpha)
    return order_statistic(arr, enlarged_rank(arr.size, alpha))


@dataclass(frozen=True)
class JitterSpec:
    """Uniform(-scale, scale) perturbation with a fixed seed."""

    scale: float
    seed: int

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidInputError("jitter scale must be positive and finite")
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidInputError("jitter seed must be a 64-bit unsigned integer")

    @classmethod
    def for_scores(cls, scores, seed: int, rel_scale: float = DEFAULT_JITTER_SCALE) -> "JitterSpec":
        """Scale-aware default: ``rel_scale * (max - min + 1)``."""
        arr = as_scores(scores, allow_empty=True)
        spread = float(arr.max() - arr.min()) if arr.size else 0.0
        return cls(scale=rel_scale * (spread + 1.0), seed=seed)


def jitter_scores(scores, spec: JitterSpec, trial: int = 0) -> np.ndarray:
    arr = as_scores(scores, allow_empty=True)
    if arr.size == 0:
        return arr.copy()
    rng = stream(spec.seed, trial, "jitter")
    return arr + rng.uniform(-spec.scale, spec.scale, size=arr.size)
