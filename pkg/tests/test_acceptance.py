"""Acceptance criteria at their stated tolerances.

Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL line
per criterion at the end of the run.
"""

import math
import time

import numpy as np
import pytest
from oracles import naive_full_conformal, random_small_instance

from condcover.bounds import bernstein_gamma
from condcover.fullconf import GridSpec, full_conformal_membership
from condcover.harness import ExperimentConfig, emit_summary, prediction_cost, run_experiment, summary_lookup
from condcover.harness.verify import group_deviation_quantile, lemma8_fit, verify_bound
from condcover.qr import CalibrationSample

pytestmark = pytest.mark.acceptance


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


@pytest.mark.criterion(1, "marginal exactness of enlarged split conformal")
def test_marginal_exactness(report):
    v, secs = timed(verify_bound, "marginal", {"n": 100, "alpha": 0.1}, trials=10_000)
    c = v.checks[0]
    se = v.extras["mc_se"]
    report(f"mean coverage {c.value:.5f} in [{0.9 - 3 * se:.5f}, {0.9 + 1 / 101 + 3 * se:.5f}], {secs:.1f}s")
    assert se < 0.0015
    assert 0.9 - 3 * se <= c.value <= 0.9 + 1 / 101 + 3 * se
    assert secs < 10


@pytest.mark.criterion(2, "sample-conditional lower tail (n=1000, gamma=0.05)")
def test_prop2(report):
    v, secs = timed(verify_bound, "prop2", {"n": 1000, "alpha": 0.1, "gamma": 0.05}, trials=2000)
    c = v.checks[0]
    nominal = math.exp(-2 * 1000 * 0.05**2)
    assert c.nominal == pytest.approx(nominal, rel=1e-12)
    report(f"violation rate {c.value:.4f} <= {c.hi:.4f}, {secs:.1f}s")
    assert c.value <= nominal + 3 * math.sqrt(nominal * (1 - nominal) / 2000)
    assert secs < 30


@pytest.mark.criterion(3, "variance-adaptive one- and two-sided deviation")
@pytest.mark.parametrize("n,alpha", [(500, 0.05), (500, 0.1), (2000, 0.05), (2000, 0.1)])
def test_prop3(n, alpha, report):
    v, secs = timed(verify_bound, "prop3", {"n": n, "alpha": alpha, "delta": 0.05}, trials=2000)
    one, two = v.checks
    report(f"n={n} a={alpha}: one-sided {one.value:.4f}<={one.hi:.4f}, two-sided {two.value:.4f}<={two.hi:.4f}")
    assert one.nominal == 0.05 and two.nominal == 0.10
    assert one.passed and two.passed
    assert secs < 30


@pytest.mark.criterion(3, "variance-adaptive one- and two-sided deviation")
def test_prop3_gamma_below_closed_form_upper(report):
    grid = [(n, a, d) for n in np.unique(np.logspace(0, 6, 10).astype(int))
            for a in np.linspace(0.0, 1.0, 10) for d in np.linspace(0.001, 0.999, 10)]
    assert len(grid) == 1000
    bad = [(n, a, d) for n, a, d in grid if not bernstein_gamma(int(n), float(a), float(d)).gamma
           <= bernstein_gamma(int(n), float(a), float(d)).upper]
    report(f"gamma <= upper on {len(grid)} grid points")
    assert bad == []


@pytest.mark.criterion(4, "two-sided band for distinct scores")
def test_corollary1(report):
    v, secs = timed(verify_bound, "corollary1", {"n": 1000, "alpha": 0.1, "gamma": 0.05}, trials=2000)
    c = v.checks[0]
    nominal = 2 * math.exp(-2 * 1000 * 0.05**2)
    assert c.nominal == pytest.approx(nominal, rel=1e-12)
    report(f"outside-band rate {c.value:.4f} <= {c.hi:.4f}, {secs:.1f}s")
    assert c.value <= nominal + 3 * math.sqrt(nominal * (1 - nominal) / 2000)
    assert secs < 30


@pytest.fixture(scope="module")
def fits():
    out, secs = timed(lambda: [lemma8_fit(0, i) for i in range(500)])
    return out, secs


@pytest.mark.criterion(5, "weighted miscoverage identities on 500 fits")
def test_lemma8_identities(fits, report):
    fs, secs = fits
    assert {f.map_kind for f in fs} == {"group", "sign"}
    assert {f.d for f in fs} == set(range(1, 11))
    assert min(f.n for f in fs) >= 50 and max(f.n for f in fs) <= 500
    up = sum(f.upper_gap > 1e-8 for f in fs)
    lo = sum(f.lower_gap < -1e-8 for f in fs)
    report(f"upper violations {up}, lower violations {lo}, max upper gap {max(f.upper_gap for f in fs):.2e}, "
           f"{secs:.1f}s")
    assert up == 0 and lo == 0
    assert secs < 60


@pytest.mark.criterion(6, "interpolation set size at most d")
def test_interpolation_bound(fits, report):
    fs, _ = fits
    bad = sum(f.interp > f.d for f in fs)
    report(f"violations {bad}/500, max card(I0)-d {max(f.interp - f.d for f in fs)}")
    assert bad == 0


@pytest.mark.criterion(7, "KKT stationarity and dual range")
def test_kkt(fits, report):
    fs, _ = fits
    worst = max(f.kkt for f in fs)
    dual = max(f.dual_excess for f in fs)
    report(f"max kkt residual {worst:.2e}, max dual excess {dual:.2e}")
    assert worst <= 1e-8
    assert dual <= 1e-8


@pytest.fixture(scope="module")
def gaussian_summary():
    cfg = ExperimentConfig("gaussian-linreg", trials=300, alpha_des=0.1, corrections=("none", "naive", "scaling"),
                           settings=(2, 5, 10, 20, 40), params={"d": 20})
    recs, secs = timed(run_experiment, cfg)
    return emit_summary(recs), secs


def _cov(rows, ratio, correction):
    return summary_lookup(rows, f"n/d={ratio}", "adaptive", correction).mean


@pytest.mark.criterion(8, "undercoverage without correction and scaling correction accuracy (d=20)")
def test_gaussian_linreg(gaussian_summary, report):
    rows, secs = gaussian_summary
    none = {r: _cov(rows, r, "none") for r in (2, 5, 10)}
    scaling = {r: _cov(rows, r, "scaling") for r in (10, 20, 40)}
    naive = {r: _cov(rows, r, "naive") for r in (10, 20, 40)}
    closer = sum(abs(scaling[r] - 0.9) < abs(naive[r] - 0.9) for r in (10, 20, 40))
    report("none " + ", ".join(f"{r}:{v:.3f}" for r, v in none.items())
           + "; scaling " + ", ".join(f"{r}:{v:.4f}" for r, v in scaling.items())
           + "; naive " + ", ".join(f"{r}:{v:.4f}" for r, v in naive.items()) + f"; {secs:.0f}s")
    assert all(v <= 0.89 for v in none.values())
    assert all(abs(v - 0.9) <= 0.015 for v in scaling.values())
    assert closer >= 2
    assert secs < 300


@pytest.fixture(scope="module")
def sinusoid_summary():
    cfg = ExperimentConfig("sinusoid", trials=100, alpha_des=0.1, methods=("two-sided", "full-grid"),
                           corrections=("scaling",), settings=(100, 800))
    recs, secs = timed(run_experiment, cfg)
    return emit_summary(recs), secs


@pytest.mark.criterion(9, "sinusoid per-bin miscoverage, split versus grid full conformal")
def test_sinusoid(sinusoid_summary, report):
    rows, secs = sinusoid_summary
    bins = [f"bin{i}" for i in range(5)]

    def miss(setting, method, correction, group):
        return 1.0 - summary_lookup(rows, setting, method, correction, group).mean

    for method, corr in (("two-sided", "scaling"), ("full-grid", "none")):
        vals = [miss("n_val=800", method, corr, b) for b in bins]
        assert all(0.06 <= v <= 0.14 for v in vals), (method, vals)
    split100 = [miss("n_val=100", "two-sided", "scaling", b) for b in bins]
    full100 = [miss("n_val=100", "full-grid", "none", b) for b in bins]
    marg = miss("n_val=100", "two-sided", "scaling", "marginal")
    report(f"n=100 split bins {min(split100):.3f}-{max(split100):.3f} vs full {min(full100):.3f}-"
           f"{max(full100):.3f}, split marginal {marg:.3f}; {secs:.0f}s")
    assert np.mean(split100) > np.mean(full100)
    assert 0.07 <= marg <= 0.13
    assert secs < 600


@pytest.mark.criterion(10, "group deviation shrinks at the root-n rate")
def test_rate_scaling(report):
    (q1000, q4000), secs = timed(lambda: [group_deviation_quantile(n, 300, d=5) for n in (1000, 4000)])
    ratio = q4000 / q1000
    report(f"q90 n=1000 {q1000:.4f}, n=4000 {q4000:.4f}, ratio {ratio:.3f}; {secs:.1f}s")
    assert ratio <= 0.6
    assert secs < 300


@pytest.mark.criterion(11, "grid full conformal matches a naive per-candidate oracle")
def test_full_conformal_oracle(report):
    t0 = time.perf_counter()
    mismatched = ambiguous = 0
    for seed in range(50):
        F, s, phi, alpha = random_small_instance(seed)
        grid = GridSpec.for_scores(s, 128)
        acc, amb = naive_full_conformal(F, s, phi, alpha, grid.values)
        res = full_conformal_membership(CalibrationSample(F, s), phi, alpha, grid)
        ambiguous += int(amb.any())
        mismatched += int(not np.array_equal(res.accepted, acc))
    secs = time.perf_counter() - t0
    report(f"{mismatched} mismatched masks, {ambiguous} ambiguous instances, {secs:.1f}s")
    assert ambiguous == 0
    assert mismatched == 0
    assert secs < 60


@pytest.mark.criterion(12, "full conformal prediction at least 10x slower than split")
def test_timing_direction(report):
    cost = prediction_cost(n_val=800, n_points=10)
    report(f"split {cost.split_seconds * 1e6:.1f}us/pt, full {cost.full_seconds * 1e3:.1f}ms/pt, "
           f"ratio {cost.ratio:.0f}x")
    assert cost.ratio >= 10
