"""Monte Carlo engine for the synthetic experiments.

Each trial regenerates its data from ``(seed, trial)`` alone, so trials can
run in any order or in worker processes and the output stays identical.
"""

from __future__ import annotations

import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Mapping

import numpy as np

from ..conformal import CORRECTIONS, calibrate_adaptive, calibrate_static, calibrate_two_sided
from ..errors import InfeasibleCorrectionError, InvalidInputError
from ..features import bin_map, sign_map
from ..fullconf import DEFAULT_GRID_POINTS, GridSpec, full_conformal_upper
from ..qr import CalibrationSample
from ..scores import check_alpha, enlarged_quantile
from ..synthetic import (
    GaussianLinregConfig,
    SinusoidConfig,
    SliceConfig,
    fit_base_predictor,
    gen_classification,
    gen_gaussian_linreg,
    gen_sinusoid,
    gen_slices,
)
from .records import TrialRecord, write_results

log = logging.getLogger("condcover.harness")

EXPERIMENTS = ("gaussian-linreg", "sinusoid", "slices", "bound-verify")
METHODS = ("static", "adaptive", "two-sided", "full-grid")

_DEFAULT_METHODS = {
    "gaussian-linreg": ("adaptive",),
    "sinusoid": ("two-sided", "full-grid"),
    "slices": ("static", "adaptive"),
    "bound-verify": ("static",),
}
_DEFAULT_CORRECTIONS = {
    "gaussian-linreg": ("none", "naive", "scaling"),
    "sinusoid": ("scaling",),
    "slices": ("none",),
    "bound-verify": ("none",),
}
_DEFAULT_SETTINGS = {
    "gaussian-linreg": (2, 5, 10, 20, 40),  # n/d
    "sinusoid": (50, 100, 200, 400, 800),  # n_val
    "slices": (1000,),  # n_val
    "bound-verify": ("prop2", "prop3", "corollary1", "corollary3", "lemma8"),
}
_TRIAL_METHODS = {"gaussian-linreg": ("static", "adaptive", "full-grid"),
                  "sinusoid": ("static", "two-sided", "full-grid"),
                  "slices": ("static", "adaptive", "full-grid"),
                  "bound-verify": ("static",)}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run.

    ``settings`` is the swept axis: n/d ratios for gaussian-linreg, validation
    sizes for sinusoid and slices, verification kinds for bound-verify.
    ``params`` overrides generator fields (d, k, n_train, n_test, d0, ...); for
    sinusoid, ``response`` picks "raw" y (default) or "residual" of the degree-5 fit.
    """

    experiment: str
    trials: int = 100
    alpha_des: float = 0.1
    corrections: tuple[str, ...] | None = None
    methods: tuple[str, ...] | None = None
    seed: int = 0
    output_path: str | None = None
    settings: tuple | None = None
    grid_points: int = DEFAULT_GRID_POINTS
    workers: int = 1
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidInputError(f"unknown experiment {self.experiment!r}; known: {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        check_alpha(self.alpha_des, "alpha_des")
        methods = tuple(self.methods or _DEFAULT_METHODS[self.experiment])
        if not methods:
            raise InvalidInputError("at least one method is required")
        allowed = _TRIAL_METHODS[self.experiment]
        bad = [m for m in methods if m not in allowed]
        if bad:
            raise InvalidInputError(f"methods {bad} not available for {self.experiment}; choose from {allowed}")
        corrections = tuple(self.corrections or _DEFAULT_CORRECTIONS[self.experiment])
        for c in corrections:
            if c not in CORRECTIONS:
                raise InvalidInputError(f"unknown correction {c!r}")
        settings = tuple(self.settings or _DEFAULT_SETTINGS[self.experiment])
        if not settings:
            raise InvalidInputError("settings must be nonempty")
        if self.grid_points < 2 or self.workers < 1:
            raise InvalidInputError("grid_points must be >= 2 and workers >= 1")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "corrections", corrections)
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "params", dict(self.params))

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ExperimentConfig":
        doc = dict(doc)
        if "correction" in doc:
            c = doc.pop("correction")
            doc.setdefault("corrections", [c] if isinstance(c, str) else c)
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise InvalidInputError(f"unknown config keys: {sorted(extra)}")
        for key in ("corrections", "methods", "settings"):
            if doc.get(key) is not None:
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("corrections", "methods", "settings"):
            d[key] = list(d[key])
        return d


# -- problems: calibration/test data for one (trial, setting) -----------------

@dataclass(frozen=True)
class Problem:
    """Scores and features for one trial at one setting.

    ``two_sided`` problems have signed scores and a lower threshold; widths
    come from ``width_fn(lower, upper)``.
    """

    cal: CalibrationSample
    test_features: np.ndarray
    test_scores: np.ndarray
    groups: dict[str, np.ndarray]
    two_sided: bool
    width_fn: Callable[[np.ndarray | None, np.ndarray], np.ndarray]


def _abs_width(lower, upper):
    return 2.0 * np.maximum(upper, 0.0)


def _interval_width(lower, upper):
    return np.maximum(upper - lower, 0.0)


def _gaussian_problem(cfg: ExperimentConfig, trial: int, ratio) -> Problem:
    d = int(cfg.params.get("d", 20))
    n_val = int(round(float(ratio) * d))
    gcfg = GaussianLinregConfig(
        d=d, n_train=int(cfg.params.get("n_train", 100)), n_val=n_val,
        n_test=int(cfg.params.get("n_test", 1000)), seed=cfg.seed, trial=trial,
    )
    data = gen_gaussian_linreg(gcfg)
    f = fit_base_predictor(data.train)
    fmap = sign_map(d)
    cal = CalibrationSample(fmap.transform(data.val.x), np.abs(data.val.y - f.predict(data.val.x)))
    s_test = np.abs(data.test.y - f.predict(data.test.x))
    return Problem(cal, fmap.transform(data.test.x), s_test, {}, False, _abs_width)


def _sinusoid_problem(cfg: ExperimentConfig, trial: int, n_val) -> Problem:
    k = int(cfg.params.get("k", 5))
    scfg = SinusoidConfig(
        k=k, n_train=int(cfg.params.get("n_train", 200)), n_val=int(n_val),
        n_test=int(cfg.params.get("n_test", 500)), seed=cfg.seed, trial=trial,
    )
    data = gen_sinusoid(scfg)
    response = cfg.params.get("response", "raw")
    if response == "raw":
        # the bands are on y itself
        r_val, r_test = data.val.y, data.test.y
    elif response == "residual":
        f = fit_base_predictor(data.train, "polynomial", degree=int(cfg.params.get("degree", 5)))
        r_val, r_test = data.val.y - f.predict(data.val.x), data.test.y - f.predict(data.test.x)
    else:
        raise InvalidInputError(f"response must be 'raw' or 'residual', got {response!r}")
    fmap = bin_map(k)
    cal = CalibrationSample(fmap.transform(data.val.x), r_val)
    groups = {f"bin{i}": data.test.labels == i for i in range(k)}
    return Problem(cal, fmap.transform(data.test.x), r_test, groups, True, _interval_width)


def _slices_problem(cfg: ExperimentConfig, trial: int, n_val) -> Problem:
    keys = {f.name for f in fields(SliceConfig)} - {"seed", "trial", "n_val"}
    scfg = SliceConfig(**{k: v for k, v in cfg.params.items() if k in keys},
                       n_val=int(n_val), seed=cfg.seed, trial=trial)
    data = gen_classification(scfg)
    W, groups = gen_slices(data.test.x, scfg)
    val_scores = data.label_scores(data.val.x)[np.arange(len(data.val)), data.val.labels]
    test_all = data.label_scores(data.test.x)
    test_scores = test_all[np.arange(len(data.test)), data.test.labels]

    def set_size(lower, upper):
        return (test_all <= upper[:, None]).sum(axis=1).astype(float)

    return Problem(CalibrationSample(data.val.x @ W, val_scores), data.test.x @ W, test_scores,
                   groups, False, set_size)


_PROBLEMS = {"gaussian-linreg": _gaussian_problem, "sinusoid": _sinusoid_problem, "slices": _slices_problem}


def setting_label(experiment: str, setting) -> str:
    if experiment == "gaussian-linreg":
        return f"n/d={float(setting):g}"
    if experiment == "bound-verify":
        return str(setting)
    return f"n_val={int(setting)}"


# -- methods -------------------------------------------------------------------

def grid_upper_thresholds(sample: CalibrationSample, features: np.ndarray, alpha: float,
                          grid_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Full-conformal upper threshold per row, computed once per distinct row."""
    grid = GridSpec.for_scores(sample.scores, grid_points)
    uniq, inverse = np.unique(features, axis=0, return_inverse=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        ups = np.array([full_conformal_upper(sample, row, alpha, grid) for row in uniq])
    if caught:
        # small groups can accept every candidate; the grid top is then the reported edge
        log.debug("%d full-conformal sets reached the grid edge", len(caught))
    return ups[np.asarray(inverse).reshape(-1)]


def _thresholds(prob: Problem, method: str, correction: str, alpha: float, grid_points: int):
    """(lower, upper) thresholds on the test points for one method."""
    F = prob.test_features
    m = F.shape[0]
    s = prob.cal.scores
    if method == "static":
        if prob.two_sided:
            return np.full(m, -enlarged_quantile(-s, alpha / 2)), np.full(m, enlarged_quantile(s, alpha / 2))
        return None, np.full(m, calibrate_static(s, alpha).tau)
    if method == "adaptive":
        return None, F @ calibrate_adaptive(prob.cal, alpha, correction).theta_upper
    if method == "two-sided":
        rule = calibrate_two_sided(prob.cal, alpha, correction)
        return F @ rule.theta_lower, F @ rule.theta_upper
    if method == "full-grid":
        if prob.two_sided:
            up = grid_upper_thresholds(prob.cal, F, alpha / 2, grid_points)
            lo = -grid_upper_thresholds(prob.cal.with_scores(-s), F, alpha / 2, grid_points)
            return lo, up
        return None, grid_upper_thresholds(prob.cal, F, alpha, grid_points)
    raise InvalidInputError(f"unknown method {method!r}")


def _method_cells(cfg: ExperimentConfig):
    for method in cfg.methods:
        if method in ("adaptive", "two-sided"):
            for c in cfg.corrections:
                yield method, c
        else:
            yield method, "enlarged" if method == "static" else "none"


def _records_for(cfg, trial, label, method, correction, prob, lower, upper, millis):
    s = prob.test_scores
    hit = s <= upper
    if lower is not None:
        hit &= lower <= s
    width = prob.width_fn(lower, upper)
    out = []
    for name, mask in [("marginal", np.ones(s.size, dtype=bool)), *prob.groups.items()]:
        count = int(mask.sum())
        covered = int(hit[mask].sum())
        if count:
            rate, wm, wmed = covered / count, float(width[mask].mean()), float(np.median(width[mask]))
        else:
            rate = wm = wmed = None
        out.append(TrialRecord(cfg.experiment, label, trial, method, correction, name,
                               covered, count, rate, wm, wmed, millis))
    return out


def run_trial(cfg: ExperimentConfig, trial: int) -> list[TrialRecord]:
    """All records of one trial, across settings and methods."""
    if cfg.experiment == "bound-verify":
        return _bound_verify_trial(cfg, trial)
    records = []
    for setting in cfg.settings:
        label = setting_label(cfg.experiment, setting)
        prob = _PROBLEMS[cfg.experiment](cfg, trial, setting)
        for method, correction in _method_cells(cfg):
            t0 = time.perf_counter()
            try:
                lower, upper = _thresholds(prob, method, correction, cfg.alpha_des, cfg.grid_points)
            except InfeasibleCorrectionError as e:
                log.warning("trial %d %s %s/%s skipped: %s", trial, label, method, correction, e)
                continue
            millis = 1000.0 * (time.perf_counter() - t0)
            records.extend(_records_for(cfg, trial, label, method, correction, prob, lower, upper, millis))
    return records


def _bound_verify_trial(cfg: ExperimentConfig, trial: int) -> list[TrialRecord]:
    # one "trial" is a whole verification batch with its own seed offset
    from .verify import verify_bound

    n_inner = int(cfg.params.get("inner_trials", 2000))
    out = []
    for kind in cfg.settings:
        t0 = time.perf_counter()
        v = verify_bound(str(kind), cfg.params.get(str(kind)), n_inner, cfg.seed + trial)
        millis = 1000.0 * (time.perf_counter() - t0)
        for c in v.checks:
            viol = c.violations if c.violations is not None else int(not c.passed)
            total = c.trials if c.violations is not None else 1
            out.append(TrialRecord(cfg.experiment, str(kind), trial, "static", "none", c.name,
                                   total - viol, total, 1.0 - viol / total, None, None, millis))
    return out


def run_experiment(cfg: ExperimentConfig) -> list[TrialRecord]:
    """Run every trial; results are ordered by trial regardless of worker count.

    Writes the results CSV (and metadata) when ``cfg.output_path`` is set.
    """
    trials = range(cfg.trials)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(run_trial, [cfg] * cfg.trials, trials))
    else:
        chunks = []
        for t in trials:
            chunks.append(run_trial(cfg, t))
            log.info("trial %d/%d done", t + 1, cfg.trials)
    records = [r for chunk in chunks for r in chunk]
    if cfg.output_path:
        write_results(cfg.output_path, records, cfg.to_dict())
    return records


# -- timing --------------------------------------------------------------------

@dataclass(frozen=True)
class PredictionCost:
    split_seconds: float  # per test point, rule already fit
    full_seconds: float  # per test point
    fit_seconds: float  # fitting the split rule once

    @property
    def ratio(self) -> float:
        return self.full_seconds / self.split_seconds


def prediction_cost(n_val: int = 800, n_points: int = 10, alpha: float = 0.1, seed: int = 0,
                    grid_points: int = DEFAULT_GRID_POINTS, repeats: int = 200) -> PredictionCost:
    """Per-point prediction time of the fitted two-sided rule versus grid full conformal.

    Split predictions featurize and threshold one point at a time, which is
    the fair comparison to full conformal's per-point refits.
    """
    cfg = ExperimentConfig("sinusoid", trials=1, alpha_des=alpha, seed=seed)
    prob = _sinusoid_problem(cfg, 0, n_val)
    fmap = bin_map(int(cfg.params.get("k", 5)))
    data = gen_sinusoid(SinusoidConfig(n_val=n_val, seed=seed))
    xs = data.test.x[:n_points]

    t0 = time.perf_counter()
    rule = calibrate_two_sided(prob.cal, alpha, "scaling")
    fit_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    for _ in range(repeats):
        for x in xs:
            phi = fmap.transform(x[None, :])
            rule.thresholds(phi)
    split_s = (time.perf_counter() - t0) / (repeats * len(xs))

    grid_up = GridSpec.for_scores(prob.cal.scores, grid_points)
    grid_lo = GridSpec.for_scores(-prob.cal.scores, grid_points)
    neg = prob.cal.with_scores(-prob.cal.scores)
    t0 = time.perf_counter()
    for x in xs:
        phi = fmap.transform(x[None, :])[0]
        full_conformal_upper(prob.cal, phi, alpha / 2, grid_up)
        full_conformal_upper(neg, phi, alpha / 2, grid_lo)
    full_s = (time.perf_counter() - t0) / len(xs)
    return PredictionCost(split_s, full_s, fit_s)
