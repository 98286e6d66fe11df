"""Named feature maps x -> phi(x) in R^d.

Each map is rebuildable from ``(name, params)`` so a serialized rule can
recover the exact featurization it was fitted with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import InvalidInputError
from .rng import stream


@dataclass(frozen=True)
class FeatureMap:
    name: str
    dim: int
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    has_bias: bool = False
    b_phi: float | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def transform(self, X) -> np.ndarray:
        """Featurize a batch of inputs (rows) into an (m, dim) matrix."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = np.asarray(self.fn(X), dtype=float)
        if out.ndim != 2 or out.shape[1] != self.dim or out.shape[0] != X.shape[0]:
            raise InvalidInputError(
                f"feature map {self.name!r} produced shape {out.shape}, expected ({X.shape[0]}, {self.dim})"
            )
        if not np.all(np.isfinite(out)):
            raise InvalidInputError(f"feature map {self.name!r} produced non-finite values")
        return out

    def apply(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.transform(x[None, :])[0]

    def spec(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


def constant_map() -> FeatureMap:
    return FeatureMap("constant", 1, lambda X: np.ones((X.shape[0], 1)), has_bias=True, b_phi=1.0)


def _labels(X: np.ndarray, k: int) -> np.ndarray:
    g = X[:, 0]
    lab = np.rint(g).astype(int)
    if np.any(np.abs(g - lab) > 0) or np.any(lab < 0) or np.any(lab >= k):
        raise InvalidInputError(f"group labels must be integers in [0, {k})")
    return lab


def _one_hot(lab: np.ndarray, k: int, bias: bool) -> np.ndarray:
    # with a bias column the first group is the baseline, keeping full rank
    onehot = np.zeros((lab.size, k))
    onehot[np.arange(lab.size), lab] = 1.0
    if bias:
        return np.column_stack([np.ones(lab.size), onehot[:, 1:]])
    return onehot


def group_map(k: int, bias: bool = False) -> FeatureMap:
    """Indicators of a partition into k groups; x[0] holds the group label."""
    if k < 1:
        raise InvalidInputError("need at least one group")
    return FeatureMap(
        "group",
        k,
        lambda X: _one_hot(_labels(X, k), k, bias),
        has_bias=bias,
        b_phi=math.sqrt(2.0) if bias and k > 1 else 1.0,
        params={"k": k, "bias": bias},
    )


def bin_map(k: int, bias: bool = False) -> FeatureMap:
    """Indicators of the bins [i/k, (i+1)/k) for scalar x in [0, 1]."""
    if k < 1:
        raise InvalidInputError("need at least one bin")

    def fn(X):
        lab = np.clip(np.floor(X[:, 0] * k).astype(int), 0, k - 1)
        return _one_hot(lab, k, bias)

    return FeatureMap(
        "bins", k, fn, has_bias=bias, b_phi=math.sqrt(2.0) if bias and k > 1 else 1.0,
        params={"k": k, "bias": bias},
    )


def sign_map(d: int) -> FeatureMap:
    """(1, 1{x_1 > 0}, ..., 1{x_d > 0})."""
    if d < 1:
        raise InvalidInputError("sign map needs d >= 1")

    def fn(X):
        if X.shape[1] != d:
            raise InvalidInputError(f"sign map expects {d} inputs, got {X.shape[1]}")
        return np.column_stack([np.ones(X.shape[0]), (X > 0).astype(float)])

    return FeatureMap("sign", d + 1, fn, has_bias=True, b_phi=math.sqrt(d + 1.0), params={"d": d})


def projection_matrix(d: int, d0: int, seed: int) -> np.ndarray:
    return stream(seed, 0, "projection").standard_normal((d, d0))


def projection_map(d: int, d0: int, seed: int, bias: bool = False) -> FeatureMap:
    """phi(x) = W^T x with W_ij ~ N(0, 1) drawn from ``seed``."""
    W = projection_matrix(d, d0, seed)

    def fn(X):
        if X.shape[1] != d:
            raise InvalidInputError(f"projection expects {d} inputs, got {X.shape[1]}")
        Z = X @ W
        return np.column_stack([np.ones(X.shape[0]), Z]) if bias else Z

    return FeatureMap(
        "projection", d0 + int(bias), fn, has_bias=bias, b_phi=None,
        params={"d": d, "d0": d0, "seed": seed, "bias": bias},
    )


def identity_map(d: int, bias: bool = True) -> FeatureMap:
    """phi(x) = (1, x) or x; handy when inputs are already featurized."""

    def fn(X):
        if X.shape[1] != d:
            raise InvalidInputError(f"identity map expects {d} inputs, got {X.shape[1]}")
        return np.column_stack([np.ones(X.shape[0]), X]) if bias else X

    return FeatureMap(
        "identity", d + int(bias), fn, has_bias=bias, b_phi=None, params={"d": d, "bias": bias}
    )


_REGISTRY: dict[str, Callable[..., FeatureMap]] = {
    "constant": constant_map,
    "group": group_map,
    "bins": bin_map,
    "sign": sign_map,
    "projection": projection_map,
    "identity": identity_map,
}


def feature_map_from_spec(name: str, params: Mapping[str, Any] | None = None) -> FeatureMap:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise InvalidInputError(f"unknown feature map {name!r}; known: {sorted(_REGISTRY)}") from None
    try:
        return factory(**dict(params or {}))
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for feature map {name!r}: {exc}") from None
