"""Independent reference implementations used as test oracles."""

from itertools import combinations

import numpy as np

from condcover.rng import stream


def pinball_mean(resid, alpha):
    return np.mean(alpha * np.maximum(resid, 0) + (1 - alpha) * np.maximum(-resid, 0))


def optimal_vertices(F, s, alpha, rtol=1e-12):
    """All interpolating vertices of the pinball LP that attain the optimum.

    Valid when F has full column rank, so an optimal vertex interpolates d
    rows. Brute force over every d-subset.
    """
    n, d = F.shape
    cands = []
    for rows in combinations(range(n), d):
        A = F[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        theta = np.linalg.solve(A, s[list(rows)])
        cands.append((pinball_mean(F @ theta - s, alpha), theta))
    best = min(v for v, _ in cands)
    scale = 1.0 + abs(best)
    return [th for v, th in cands if v <= best + rtol * scale]


def naive_full_conformal(F, s, phi, alpha, grid, tol=1e-9):
    """Per-candidate acceptance by brute force.

    Returns (accepted, ambiguous): a candidate is ambiguous when different
    optimal thresholds put it on different sides of the acceptance test.
    """
    accepted = np.zeros(grid.size, dtype=bool)
    ambiguous = np.zeros(grid.size, dtype=bool)
    Fa = np.vstack([F, phi])
    for k, t in enumerate(grid):
        verts = optimal_vertices(Fa, np.append(s, t), alpha)
        h = np.array([phi @ th for th in verts])
        band = tol * (1 + abs(t))
        if t <= h.min() + band - 1e-12:
            accepted[k] = True
        elif t > h.max() + band + 1e-12:
            accepted[k] = False
        else:
            ambiguous[k] = True
    return accepted, ambiguous


def random_small_instance(seed):
    """n <= 8, d <= 2 with a full-rank bias(+covariate) design and a generic alpha."""
    rng = stream(seed, 0, "fullconf-oracle")
    n = int(rng.integers(2, 9))
    d = int(rng.integers(1, 3))
    F = np.ones((n, 1)) if d == 1 else np.column_stack([np.ones(n), rng.standard_normal(n)])
    s = rng.standard_normal(n) + (F[:, -1] if d == 2 else 0)
    phi = np.ones(1) if d == 1 else np.array([1.0, rng.standard_normal()])
    alpha = float(rng.uniform(0.05, 0.5))
    return F, s, phi, alpha
