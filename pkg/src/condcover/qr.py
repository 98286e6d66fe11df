"""Linear quantile regression by primal simplex.

Solves

    minimize  (1/n) sum_i  ell_alpha(<theta, phi_i> - s_i)

as the LP ``min alpha*1'u + (1-alpha)*1'v  s.t.  Phi theta - s = u - v,
u, v >= 0`` with theta free. A basic solution interpolates (at least) as
many points as the rank of Phi; every other point has exactly one of u_i, v_i
basic. The solver keeps that structure explicitly: the basis is the list of
interpolated points ``h`` and a sign label for the rest, so an iteration costs
one small dense solve plus O(n log n) for the ratio test instead of a full
tableau update.

Entering variables are chosen by most negative reduced cost and the ratio
test walks past breakpoints while the objective keeps decreasing (the
Barrodale-Roberts long step). After the first degenerate pivot the solver
falls back to Bland's rule with a textbook one-breakpoint ratio test, which
rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, UnboundedProblemError
from .scores import as_scores, check_alpha, pinball_loss

SolverStatus = Literal["optimal", "degenerate-optimal", "iteration-limit"]

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class CalibrationSample:
    """Rows phi(X_i) with their scores S_i. Arrays are stored read-only."""

    features: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        F = np.array(self.features, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.ndim != 2:
            raise InvalidInputError("features must be an (n, d) matrix")
        S = np.array(as_scores(self.scores), dtype=float)
        if F.shape[0] != S.size:
            raise InvalidInputError(f"{F.shape[0]} feature rows but {S.size} scores")
        if F.shape[1] < 1:
            raise InvalidInputError("feature dimension must be positive")
        if not np.all(np.isfinite(F)):
            raise InvalidInputError("features must be finite")
        F.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "features", F)
        object.__setattr__(self, "scores", S)

    @property
    def n(self) -> int:
        return self.scores.size

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_scores(self, scores) -> "CalibrationSample":
        return CalibrationSample(self.features, scores)

    def augmented(self, phi, score: float) -> "CalibrationSample":
        """Append one point at index n."""
        phi = np.asarray(phi, dtype=float).reshape(1, -1)
        return CalibrationSample(
            np.vstack([self.features, phi]), np.append(self.scores, float(score))
        )

    def distinct_scores(self, tol: float = DEFAULT_TOL) -> bool:
        """True when all pairwise gaps exceed 2*tol."""
        s = np.sort(self.scores)
        return bool(s.size < 2 or np.min(np.diff(s)) > 2 * tol)


@dataclass(frozen=True)
class QuantileFit:
    theta: np.ndarray
    alpha: float
    objective: float
    eta: np.ndarray
    interp_set: np.ndarray
    solver_status: SolverStatus
    tol: float
    basis: tuple[int, ...] = ()
    iterations: int = 0
    dual_clip: float = 0.0
    columns: tuple[int, ...] = field(default=(), repr=False)

    @property
    def d(self) -> int:
        return self.theta.size

    def predict(self, features) -> np.ndarray:
        F = np.asarray(features, dtype=float)
        if F.ndim == 1:
            F = F[None, :]
        if F.shape[1] != self.theta.size:
            raise InvalidInputError(f"expected {self.theta.size} features, got {F.shape[1]}")
        return F @ self.theta


def _independent_columns(A: np.ndarray) -> np.ndarray:
    _, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return np.array([], dtype=int)
    rank = int(np.sum(diag > diag[0] * 1e-10 * max(A.shape)))
    return np.sort(piv[:rank])


def _initial_basis(A: np.ndarray) -> np.ndarray:
    _, _, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    return np.array(piv[: A.shape[1]], dtype=int)


def _usable_basis(A: np.ndarray, basis: Sequence[int] | None) -> np.ndarray | None:
    if basis is None:
        return None
    h = np.asarray(basis, dtype=int)
    n, r = A.shape
    if h.size != r or len(set(h.tolist())) != r or h.min(initial=0) < 0 or h.max(initial=0) >= n:
        return None
    if np.linalg.cond(A[h]) > 1e12:
        return None
    return h.copy()


@dataclass
class _SimplexResult:
    theta: np.ndarray
    basis: np.ndarray
    eta: np.ndarray
    status: str
    iterations: int


def _simplex(A: np.ndarray, s: np.ndarray, alpha: float, h: np.ndarray, max_iter: int) -> _SimplexResult:
    n, r = A.shape
    lab = np.ones(n, dtype=np.int8)  # +1: u_i basic (residual >= 0), -1: v_i basic
    in_basis = np.zeros(n, dtype=bool)
    zero_tol = 1e-12 * (1.0 + np.abs(s))
    bland = False
    status = "optimal"
    it = 0
    while True:
        B = A[h]
        lu = scipy.linalg.lu_factor(B)
        theta = scipy.linalg.lu_solve(lu, s[h])
        resid = A @ theta - s
        resid[h] = 0.0
        in_basis[:] = False
        in_basis[h] = True
        lab[resid > zero_tol] = 1
        lab[resid < -zero_tol] = -1
        g = np.where(lab > 0, alpha, alpha - 1.0)
        g[in_basis] = 0.0
        z = scipy.linalg.lu_solve(lu, A.T @ g, trans=1)
        # reduced costs of u_{h_j} and v_{h_j}; -z are the basis duals
        rc_plus = alpha + z
        rc_minus = (1.0 - alpha) - z
        opt_tol = 1e-11 * (1.0 + np.max(np.abs(z)))
        cand_plus = rc_plus < -opt_tol
        cand_minus = rc_minus < -opt_tol
        if not (cand_plus.any() or cand_minus.any()):
            break
        if it >= max_iter:
            status = "iteration-limit"
            break

        if bland:
            var_plus = np.where(cand_plus, h, np.iinfo(np.int64).max)
            var_minus = np.where(cand_minus, n + h, np.iinfo(np.int64).max)
            if var_plus.min() <= var_minus.min():
                j, sign = int(np.argmin(var_plus)), 1
            else:
                j, sign = int(np.argmin(var_minus)), -1
        else:
            jp, jm = int(np.argmin(rc_plus)), int(np.argmin(rc_minus))
            if rc_plus[jp] <= rc_minus[jm]:
                j, sign = jp, 1
            else:
                j, sign = jm, -1
        rc = rc_plus[j] if sign > 0 else rc_minus[j]

        e = np.zeros(r)
        e[j] = float(sign)
        delta = scipy.linalg.lu_solve(lu, e)
        a = A @ delta
        a[in_basis] = 0.0
        eps_a = 1e-12 * max(1.0, float(np.max(np.abs(a))))
        block = ((lab > 0) & (a < -eps_a)) | ((lab < 0) & (a > eps_a))
        block &= ~in_basis
        idx = np.flatnonzero(block)
        if idx.size == 0:
            raise UnboundedProblemError("objective decreases without bound along an edge")
        steps = np.maximum(lab[idx] * resid[idx], 0.0) / np.abs(a[idx])

        if bland:
            m = steps.min()
            ties = idx[steps <= m + 1e-14 * (1.0 + m)]
            var = np.where(lab[ties] > 0, ties, n + ties)
            leave = int(ties[np.argmin(var)])
            step = float(m)
        else:
            order = np.lexsort((idx, steps))
            slope = rc + np.cumsum(np.abs(a[idx[order]]))
            hit = np.flatnonzero(slope >= -opt_tol)
            stop = int(hit[0]) if hit.size else order.size - 1
            passed = idx[order[:stop]]
            lab[passed] = -lab[passed]
            leave = int(idx[order[stop]])
            step = float(steps[order[stop]])

        if step <= 0.0:
            bland = True
        lab[h[j]] = sign
        h[j] = leave
        it += 1

    eta = g.copy()
    eta[h] = -z
    return _SimplexResult(theta=theta, basis=h, eta=eta, status=status, iterations=it)


def fit_quantile_regression(
    sample: CalibrationSample,
    alpha: float,
    tol: float = DEFAULT_TOL,
    *,
    warm_basis: Sequence[int] | None = None,
    max_iter: int | None = None,
    equilibrate: bool = True,
) -> QuantileFit:
    """Minimize the empirical pinball loss over theta and return a vertex.

    The LP objective is bounded below by zero, so for alpha in (0, 1) it is
    never unbounded, whatever the rank of the features; rank-deficient
    feature columns are held at zero and the rest are fitted.

    ``warm_basis`` takes the ``basis`` of an earlier fit on a sample with the
    same row layout and is ignored if it does not fit this problem.
    """
    alpha = check_alpha(alpha)
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    Phi = sample.features
    s = sample.scores
    n, d = Phi.shape

    scale = np.max(np.abs(Phi), axis=0) if equilibrate else np.ones(d)
    scale = np.where(scale > 0, scale, 1.0)
    A = Phi / scale
    keep = _independent_columns(A)
    if keep.size == 0:
        raise InvalidInputError("feature matrix is identically zero")
    Ar = np.ascontiguousarray(A[:, keep])

    h = _usable_basis(Ar, warm_basis)
    if h is None:
        h = _initial_basis(Ar)
    if max_iter is None:
        max_iter = 20 * (n + keep.size) + 100
    res = _simplex(Ar, s, alpha, h, max_iter)

    theta = np.zeros(d)
    theta[keep] = res.theta / scale[keep]
    resid = Phi @ theta - s
    band = tol * (1.0 + np.abs(s))
    interp = np.flatnonzero(np.abs(resid) <= band)

    lo, hi = -(1.0 - alpha), alpha
    eta = np.clip(res.eta, lo, hi)
    dual_clip = float(np.max(np.abs(eta - res.eta)))

    status: SolverStatus = res.status  # type: ignore[assignment]
    if status == "optimal" and interp.size > keep.size:
        status = "degenerate-optimal"

    theta.setflags(write=False)
    eta.setflags(write=False)
    interp.setflags(write=False)
    return QuantileFit(
        theta=theta,
        alpha=alpha,
        objective=float(np.mean(pinball_loss(resid, alpha))),
        eta=eta,
        interp_set=interp,
        solver_status=status,
        tol=tol,
        basis=tuple(int(i) for i in res.basis),
        iterations=res.iterations,
        dual_clip=dual_clip,
        columns=tuple(int(c) for c in keep),
    )


def _check_fit(fit: QuantileFit, sample: CalibrationSample):
    if fit.theta.size != sample.d or fit.eta.size != sample.n:
        raise InvalidInputError("fit does not match the sample's shape")


def directional_derivative(fit: QuantileFit, sample: CalibrationSample, u) -> float:
    """Right directional derivative of the empirical pinball objective at theta-hat.

    Points within the interpolation band count as exactly interpolated, so at
    an optimum the value is >= -tol for every direction u.
    """
    _check_fit(fit, sample)
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != sample.d:
        raise InvalidInputError(f"direction has {u.size} coordinates, expected {sample.d}")
    a = sample.features @ u
    resid = sample.features @ fit.theta - sample.scores
    band = fit.tol * (1.0 + np.abs(sample.scores))
    alpha = fit.alpha
    terms = np.where(
        resid > band,
        alpha * a,
        np.where(resid < -band, -(1.0 - alpha) * a, alpha * np.maximum(a, 0) - (1.0 - alpha) * np.minimum(a, 0)),
    )
    return float(np.mean(terms))


def kkt_residual(fit: QuantileFit, sample: CalibrationSample) -> float:
    """||sum_i eta_i phi(X_i)||_2 / n."""
    _check_fit(fit, sample)
    return float(np.linalg.norm(sample.features.T @ fit.eta) / sample.n)


def exceedance(fit: QuantileFit, sample: CalibrationSample) -> np.ndarray:
    """Indicator that S_i lies strictly above the fitted threshold (outside the band)."""
    resid = sample.features @ fit.theta - sample.scores
    return resid < -fit.tol * (1.0 + np.abs(sample.scores))
