"""Seeded generators for the three synthetic settings, plus base predictors.

Every split draws from its own ``stream(seed, trial, tag)`` so train, val and
test never share random numbers and a trial can be regenerated alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .rng import stream
from .scores import empirical_quantile


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self):
        return self.y.size


def _positive(**kw):
    for k, v in kw.items():
        if v is None or v < 1:
            raise InvalidInputError(f"{k} must be a positive integer, got {v!r}")


# -- Gaussian linear model --------------------------------------------------

@dataclass(frozen=True)
class GaussianLinregConfig:
    d: int = 20
    n_train: int = 100
    n_val: int = 200
    n_test: int = 1000
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        _positive(d=self.d, n_train=self.n_train, n_val=self.n_val, n_test=self.n_test)


@dataclass(frozen=True)
class GaussianLinregData:
    train: Dataset
    val: Dataset
    test: Dataset
    w_star: np.ndarray


def gen_gaussian_linreg(cfg: GaussianLinregConfig) -> GaussianLinregData:
    """y = <w*, x> + N(0, 1), x ~ N(0, I_d), w* uniform on the unit sphere."""
    w = stream(cfg.seed, cfg.trial, "gaussian/w").standard_normal(cfg.d)
    w /= np.linalg.norm(w)

    def split(tag, m):
        rng = stream(cfg.seed, cfg.trial, f"gaussian/{tag}")
        x = rng.standard_normal((m, cfg.d))
        return Dataset(x, x @ w + rng.standard_normal(m))

    return GaussianLinregData(split("train", cfg.n_train), split("val", cfg.n_val), split("test", cfg.n_test), w)


# -- heteroskedastic sinusoid -----------------------------------------------

@dataclass(frozen=True)
class SinusoidConfig:
    k: int = 5
    n_train: int = 200
    n_val: int = 800
    n_test: int = 500
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        _positive(k=self.k, n_train=self.n_train, n_val=self.n_val, n_test=self.n_test)


@dataclass(frozen=True)
class SinusoidData:
    train: Dataset
    val: Dataset
    test: Dataset
    amplitudes: tuple[float, float]
    frequencies: tuple[float, float]

    def mean(self, x) -> np.ndarray:
        return sinusoid_mean(x, self.amplitudes, self.frequencies)


def sinusoid_mean(x, amplitudes, frequencies) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    (u0, u1), (f0, f1) = amplitudes, frequencies
    return u0 * np.cos(f0 * x) + u1 * np.sin(f1 * x)


def noise_rates(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin exponential rates (lambda_0, lambda_1) = (e^{3-3i/k}, e^{4-3i/k})."""
    i = np.arange(k)
    return np.exp(3.0 - 3.0 * i / k), np.exp(4.0 - 3.0 * i / k)


UP_PROB = 1.0 / (1.0 + math.e)


def sinusoid_noise(bins: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero, upward-skewed mixture of +Exp(lambda_0) and -Exp(lambda_1).

    Sampled by inverse CDF so the stream consumption is fixed per point.
    """
    lam0, lam1 = noise_rates(k)
    branch = rng.random(bins.size)
    v = rng.random(bins.size)
    mag = -np.log1p(-v)
    up = branch < UP_PROB
    return np.where(up, mag / lam0[bins], -mag / lam1[bins])


def sinusoid_noise_moments(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-bin noise mean and variance."""
    lam0, lam1 = noise_rates(k)
    p = UP_PROB
    mean = p / lam0 - (1 - p) / lam1
    second = p * 2 / lam0**2 + (1 - p) * 2 / lam1**2
    return mean, second - mean**2


def sinusoid_bins(x, k: int) -> np.ndarray:
    return np.clip(np.floor(np.asarray(x, dtype=float) * k).astype(int), 0, k - 1)


def gen_sinusoid(cfg: SinusoidConfig) -> SinusoidData:
    """One mean function per trial, shared by all three splits."""
    prm = stream(cfg.seed, cfg.trial, "sinusoid/f")
    amps = tuple(float(v) for v in prm.uniform(-1.0, 1.0, 2))
    freqs = tuple(float(v) for v in prm.uniform(math.pi / 4, 4 * math.pi, 2))

    def split(tag, m):
        rng = stream(cfg.seed, cfg.trial, f"sinusoid/{tag}")
        x = rng.random(m)
        b = sinusoid_bins(x, cfg.k)
        y = sinusoid_mean(x, amps, freqs) + sinusoid_noise(b, cfg.k, rng)
        return Dataset(x[:, None], y, b)

    return SinusoidData(split("train", cfg.n_train), split("val", cfg.n_val), split("test", cfg.n_test), amps, freqs)


# -- random slices over a planted softmax classifier ------------------------

@dataclass(frozen=True)
class SliceConfig:
    d: int = 32
    d0: int = 10
    quantile_hi: float = 0.8
    quantile_lo: float = 0.2
    repeats: int = 10
    n_val: int = 1000
    n_test: int = 1000
    n_classes: int = 10
    signal: float = 2.0
    seed: int = 0
    trial: int = 0

    def __post_init__(self):
        _positive(d=self.d, d0=self.d0, repeats=self.repeats, n_val=self.n_val, n_test=self.n_test,
                  n_classes=self.n_classes)
        if not (0.0 < self.quantile_lo < self.quantile_hi < 1.0):
            raise InvalidInputError("need 0 < quantile_lo < quantile_hi < 1")


@dataclass(frozen=True)
class ClassificationData:
    val: Dataset
    test: Dataset
    coef: np.ndarray = field(repr=False)

    def label_scores(self, x) -> np.ndarray:
        """Score matrix s(x, y) = -log softmax_y(x) over all labels."""
        return softmax_scores(np.asarray(x, dtype=float) @ self.coef.T)


def softmax_scores(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return np.log(np.exp(z).sum(axis=1, keepdims=True)) - z


def gen_classification(cfg: SliceConfig) -> ClassificationData:
    """Gaussian features with labels drawn from a planted linear softmax model."""
    coef = stream(cfg.seed, cfg.trial, "slices/coef").standard_normal((cfg.n_classes, cfg.d))
    coef *= cfg.signal / math.sqrt(cfg.d)

    def split(tag, m):
        rng = stream(cfg.seed, cfg.trial, f"slices/{tag}")
        x = rng.standard_normal((m, cfg.d))
        s = softmax_scores(x @ coef.T)
        p = np.exp(-s)
        cum = np.cumsum(p, axis=1)
        u = rng.random(m)[:, None] * cum[:, -1:]
        y = np.minimum((cum < u).sum(axis=1), cfg.n_classes - 1)
        return Dataset(x, y.astype(float), y)

    return ClassificationData(split("val", cfg.n_val), split("test", cfg.n_test), coef)


def gen_slices(features, cfg: SliceConfig) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Random projection W (d x d0) and the 2*d0 upper/lower slices of the test points.

    Slice j,> holds points with <w_j, x> at or above the empirical
    quantile_hi quantile; slice j,< those at or below quantile_lo.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("features must be a nonempty matrix")
    W = stream(cfg.seed, cfg.trial, "slices/W").standard_normal((X.shape[1], cfg.d0))
    proj = X @ W
    groups: dict[str, np.ndarray] = {}
    for j in range(cfg.d0):
        col = proj[:, j]
        groups[f"slice{j}>"] = col >= empirical_quantile(col, cfg.quantile_hi)
        groups[f"slice{j}<"] = col <= empirical_quantile(col, cfg.quantile_lo)
    return W, groups


# -- base predictors ---------------------------------------------------------

@dataclass(frozen=True)
class Predictor:
    kind: str
    coef: np.ndarray
    degree: int = 1
    intercept: bool = False
    degenerate: bool = False

    def design(self, x) -> np.ndarray:
        return _design(np.asarray(x, dtype=float), self.kind, self.degree, self.intercept)

    def predict(self, x) -> np.ndarray:
        return self.design(x) @ self.coef


def _design(x: np.ndarray, kind: str, degree: int, intercept: bool) -> np.ndarray:
    if x.ndim == 1:
        x = x[:, None]
    if kind == "polynomial":
        return np.vander(x[:, 0], degree + 1, increasing=True)
    return np.column_stack([np.ones(x.shape[0]), x]) if intercept else x


def fit_base_predictor(train: Dataset, kind: str = "least_squares", degree: int = 1, intercept: bool = False) -> Predictor:
    """Least squares through the normal equations, with a 1e-10 ridge if they are singular."""
    if len(train) == 0:
        raise InvalidInputError("training set is empty")
    if kind not in ("least_squares", "polynomial"):
        raise InvalidInputError(f"unknown predictor kind {kind!r}")
    if degree < 0:
        raise InvalidInputError("degree must be nonnegative")
    X = _design(np.asarray(train.x, dtype=float), kind, degree, intercept)
    G = X.T @ X
    b = X.T @ train.y
    degenerate = False
    try:
        if np.linalg.cond(G) > 1e14:
            raise np.linalg.LinAlgError
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        degenerate = True
        L = np.linalg.cholesky(G + 1e-10 * np.eye(G.shape[0]))
    coef = np.linalg.solve(L.T, np.linalg.solve(L, b))
    return Predictor(kind, coef, degree, intercept, degenerate)


# -- export --------------------------------------------------------------------

def write_datasets_csv(path, splits: dict[str, Dataset]) -> None:
    """Write splits as rows: x0..x{p-1}, y, split, label."""
    p = max(np.atleast_2d(ds.x.reshape(len(ds), -1)).shape[1] for ds in splits.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(p)] + ["y", "split", "label"])
        for name, ds in splits.items():
            X = ds.x.reshape(len(ds), -1)
            for i in range(len(ds)):
                lab = "" if ds.labels is None else int(ds.labels[i])
                w.writerow([repr(float(v)) for v in X[i]] + [repr(float(ds.y[i])), name, lab])
