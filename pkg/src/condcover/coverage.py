"""Empirical coverage: marginal, per group, and weighted gaps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .conformal import ConfidenceRule, covers_many
from .errors import InvalidInputError


@dataclass(frozen=True)
class WeightSpec:
    """Weight w(x) = <u, phi(x)>."""

    u: np.ndarray
    name: str = ""
    nonnegative: bool = False

    def __post_init__(self):
        u = np.array(self.u, dtype=float).reshape(-1)
        if not np.all(np.isfinite(u)):
            raise InvalidInputError("weight vector must be finite")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        if not self.name:
            object.__setattr__(self, "name", "u=" + ",".join(f"{v:g}" for v in u))


@dataclass(frozen=True)
class GroupCoverage:
    name: str
    count: int
    covered: int
    rate: float | None  # None for empty groups
    bound_value: float | None = None


@dataclass(frozen=True)
class WeightCoverage:
    name: str
    u: tuple[float, ...]
    weighted_gap: float
    bound_value: float | None = None


@dataclass(frozen=True)
class CoverageReport:
    marginal_rate: float
    n_test: int
    covered: int
    alpha: float
    per_group: tuple[GroupCoverage, ...] = ()
    per_weight: tuple[WeightCoverage, ...] = ()
    empty_groups: tuple[str, ...] = field(default=())

    def group(self, name: str) -> GroupCoverage:
        for g in self.per_group:
            if g.name == name:
                return g
        raise KeyError(name)

    def rows(self) -> list[dict]:
        rows = [
            {"kind": "marginal", "name": "marginal", "n": self.n_test, "covered": self.covered,
             "rate": self.marginal_rate, "gap": self.marginal_rate - (1 - self.alpha), "bound_value": None}
        ]
        for g in self.per_group:
            rows.append({
                "kind": "group", "name": g.name, "n": g.count, "covered": g.covered, "rate": g.rate,
                "gap": None if g.rate is None else g.rate - (1 - self.alpha), "bound_value": g.bound_value,
            })
        for w in self.per_weight:
            rows.append({
                "kind": "weight", "name": w.name, "n": self.n_test, "covered": None, "rate": None,
                "gap": w.weighted_gap, "bound_value": w.bound_value,
            })
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = ["kind", "name", "n", "covered", "rate", "gap", "bound_value"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v)) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        doc = asdict(self)
        return json.dumps(doc, indent=2)


def evaluate_coverage(
    rule: ConfidenceRule,
    features,
    scores,
    groups: Mapping[str, Sequence[bool]] | None = None,
    weights: Sequence[WeightSpec] = (),
    *,
    rng: np.random.Generator | None = None,
    group_bounds: Mapping[str, float] | None = None,
) -> CoverageReport:
    """Evaluate a rule on test points given as feature rows and scores.

    Groups are boolean membership vectors over the test points. Weighted gaps
    average ``w(x) * (1{covered} - (1 - alpha))`` over the test set, with
    alpha the rule's desired level.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    if s.size == 0:
        raise InvalidInputError("test set is empty")
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != s.size:
        raise InvalidInputError(f"{F.shape[0]} feature rows but {s.size} scores")
    hit = covers_many(rule, F, s, rng)
    alpha = rule.alpha_desired
    m = s.size
    covered = int(hit.sum())

    per_group = []
    empty = []
    for name, mask in (groups or {}).items():
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if mask.size != m:
            raise InvalidInputError(f"group {name!r} has {mask.size} flags for {m} test points")
        count = int(mask.sum())
        c = int(hit[mask].sum())
        if count == 0:
            empty.append(name)
        bound = None if group_bounds is None else group_bounds.get(name)
        per_group.append(GroupCoverage(name, count, c, c / count if count else None, bound))

    per_weight = []
    indicator = hit.astype(float) - (1.0 - alpha)
    for spec in weights:
        if spec.u.size != F.shape[1]:
            raise InvalidInputError(f"weight {spec.name!r} has {spec.u.size} coordinates, features have {F.shape[1]}")
        w = F @ spec.u
        if spec.nonnegative and np.any(w < 0):
            raise InvalidInputError(f"weight {spec.name!r} is negative on some test points")
        gap = math.fsum(w * indicator) / m
        per_weight.append(WeightCoverage(spec.name, tuple(float(v) for v in spec.u), gap))

    return CoverageReport(
        marginal_rate=covered / m,
        n_test=m,
        covered=covered,
        alpha=alpha,
        per_group=tuple(per_group),
        per_weight=tuple(per_weight),
        empty_groups=tuple(empty),
    )
