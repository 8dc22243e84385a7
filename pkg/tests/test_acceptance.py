"""Acceptance gate: one test per numbered criterion, each printing PASS or FAIL.

All Monte Carlo checks share one base seed fixed before the first run.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from lkc_clt.covariance import IsotropicCovariance
from lkc_clt.experiment import (
    ExperimentPlan,
    battery_passes,
    first_chaos_bound_check,
    multivariate_slice_clt,
    normality_stats,
    run_experiment,
)
from lkc_clt.fieldgen import GridSpec, derive_seed, synthesize
from lkc_clt.geometry import (
    ExcursionMask,
    LkcPolicy,
    complex_cells,
    complex_euler,
    configuration_lkc1,
    crofton_lkc,
    estimate_all_lkcs,
    euler_characteristic,
    lkc_exact_box,
    threshold,
)
from lkc_clt.grf import decode, encode
from lkc_clt.theory import (
    ChaosContext,
    c1_coefficient,
    c2_first_chaos,
    expected_lkc,
    first_chaos_variance,
    flag_coefficient,
    hermite,
    hermite_quadrature,
    mehler_covariance,
    sojourn_series,
)

SEED = 20261015
GAUSS = IsotropicCovariance("gaussian", 1.0)
SPACING = 0.125
SOJOURN_Q = 1000


def record(number, checks, elapsed, budget):
    """Print and store one verdict line; ``checks`` maps labels to (ok, detail)."""
    within = elapsed < budget
    ok = all(c[0] for c in checks.values()) and within
    parts = [f"{k}: {'ok' if v[0] else 'FAIL'} ({v[1]})" for k, v in checks.items()]
    parts.append(f"runtime {elapsed:.1f}s < {budget}s: {'ok' if within else 'FAIL'}")
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | " + "; ".join(parts)
    ACCEPTANCE_LINES[str(number)] = line
    print(line)
    return ok


def mc_mean_check(x, target, floor=0.0):
    x = np.asarray(x, dtype=float)
    se = x.std(ddof=1) / math.sqrt(len(x))
    tol = max(3 * se, floor * abs(target))
    return abs(x.mean() - target) <= tol, f"mean {x.mean():.5g} vs {target:.5g}, tol {tol:.3g}"


# ---------------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def clt_run():
    """d=2, u=1, T=64, N=500: feeds criteria 5 and 6."""
    plan = ExperimentPlan(GAUSS, 2, (1.0,), (64.0,), SPACING, 500, base_seed=SEED,
                          policy=LkcPolicy(64, 64), q_max=SOJOURN_Q)
    start = time.perf_counter()
    report, _ = run_experiment(plan)
    return report, time.perf_counter() - start


# ---------------------------------------------------------------- criteria

def test_criterion_1_exact_shapes():
    start = time.perf_counter()
    g2 = GridSpec(2, 4.0, 0.25)
    e2 = estimate_all_lkcs(ExcursionMask(g2, np.ones(g2.shape, bool))).values
    g3 = GridSpec(3, 2.0, 0.25)
    e3 = estimate_all_lkcs(ExcursionMask(g3, np.ones(g3.shape, bool))).values
    exact2, exact3 = lkc_exact_box(g2.sides), lkc_exact_box(g3.sides)
    checks = {
        "2d L0": (e2[0] == 1, e2[0]),
        "2d L2": (e2[2] == exact2[2] == 64, e2[2]),
        "2d L1": (abs(e2[1] / exact2[1] - 1) < 0.03, f"{e2[1]:.4f} vs {exact2[1]}"),
        "3d L0": (e3[0] == 1, e3[0]),
        "3d L1": (abs(e3[1] / exact3[1] - 1) < 0.05, f"{e3[1]:.4f} vs {exact3[1]}"),
        "3d L3": (e3[3] == exact3[3] == 64, e3[3]),
    }
    assert record(1, checks, time.perf_counter() - start, 5)


def test_criterion_2_topology():
    start = time.perf_counter()
    n = 81
    y, x = np.mgrid[:n, :n] - (n - 1) / 2
    rad = np.hypot(x, y)
    two = np.zeros((n, n), bool)
    two[5:20, 5:30] = True
    two[40:70, 30:75] = True
    checks = {
        "disk": (euler_characteristic(rad <= 30) == 1, euler_characteristic(rad <= 30)),
        "annulus": (euler_characteristic((rad <= 30) & (rad >= 12)) == 0,
                    euler_characteristic((rad <= 30) & (rad >= 12))),
        "two components": (euler_characteristic(two) == 2, euler_characteristic(two)),
    }
    rng = np.random.default_rng(SEED)
    bad = 0
    for _ in range(1000):
        shape = tuple(rng.integers(2, 12, size=2))
        a, b = rng.random(shape) < rng.random(), rng.random(shape) < rng.random()
        ka, kb = complex_cells(a), complex_cells(b)
        lhs = complex_euler(ka | kb) + complex_euler(ka & kb)
        bad += lhs != euler_characteristic(a) + euler_characteristic(b)
    checks["additivity"] = (bad == 0, f"{bad} violations in 1000 pairs")
    assert record(2, checks, time.perf_counter() - start, 10)


def test_criterion_3_means():
    start = time.perf_counter()
    checks = {}
    # (a) volume fraction, d=2
    plan = ExperimentPlan(GAUSS, 2, (0.0, 1.0), (16.0,), SPACING, 200, base_seed=SEED,
                          lkc_indices=(2,))
    _, recs = run_experiment(plan)
    vol = plan.grid(16.0).volume
    for u in (0.0, 1.0):
        frac = [r.lkcs[2] / vol for r in recs if r.u == u]
        checks[f"(a) u={u:g}"] = mc_mean_check(frac, stats.norm.sf(u))
    # (b) lattice EPC, d=1, against the Rice value
    plan = ExperimentPlan(GAUSS, 1, (0.0, 1.0), (64.0,), SPACING, 200, base_seed=SEED + 1)
    _, recs = run_experiment(plan)
    sides = plan.grid(64.0).sides
    for u in (0.0, 1.0):
        chi = [r.lkcs[0] for r in recs if r.u == u]
        checks[f"(b) u={u:g}"] = mc_mean_check(chi, expected_lkc(GAUSS, sides, u, 0))
    # (c) lattice EPC, d=2, u=2, against the GKF value
    plan = ExperimentPlan(GAUSS, 2, (2.0,), (32.0,), SPACING, 200, base_seed=SEED + 2,
                          lkc_indices=(0,))
    _, recs = run_experiment(plan)
    chi = [r.lkcs[0] for r in recs]
    checks["(c) u=2"] = mc_mean_check(chi, expected_lkc(GAUSS, plan.grid(32.0).sides, 2.0, 0),
                                      floor=0.05)
    assert record(3, checks, time.perf_counter() - start, 15 * 60)


def test_criterion_4_sojourn_variance():
    start = time.perf_counter()
    checks = {}
    for d, T, n, tol in ((1, 256.0, 1000, 0.10), (2, 64.0, 500, 0.15)):
        model = GAUSS.with_dimension(d)
        plan = ExperimentPlan(model, d, (0.0,), (T,), SPACING, n, base_seed=SEED + 10 + d,
                              lkc_indices=(d,), q_max=SOJOURN_Q)
        report, _ = run_experiment(plan)
        var = report.row(d, 0.0).variance
        ref = sojourn_series(model, 0.0, SOJOURN_Q).value
        rel = abs(var / ref - 1)
        checks[f"d={d}"] = (rel <= tol, f"var {var:.4f} vs series {ref:.4f}, rel {rel:.3f} <= {tol}")
    assert record(4, checks, time.perf_counter() - start, 30 * 60)


def test_criterion_5_normality(clt_run):
    report, elapsed = clt_run
    start = time.perf_counter()
    checks = {}
    for i in range(3):
        row = report.row(i, 1.0)
        checks[f"L{i}"] = (bool(row.normal),
                           f"skew {row.skewness:+.3f}, kurt {row.excess_kurtosis:+.3f}, "
                           f"KS p {row.ks_p_value:.3f}")
    x = np.random.default_rng(SEED).standard_normal(500) ** 2
    control = normality_stats((x - x.mean()) / x.std())
    checks["chi-square control rejected"] = (not battery_passes(control),
                                            f"skew {control[0]:.2f}, KS p {control[3]:.1e}")
    assert record(5, checks, elapsed + time.perf_counter() - start, 45 * 60)


def test_criterion_6_first_chaos_bound(clt_run):
    report, elapsed = clt_run
    start = time.perf_counter()
    checks = {}
    for k in (0, 1, 2):
        ctx = ChaosContext.from_model(GAUSS, k, 1.0)
        res = first_chaos_bound_check(report, ctx)
        checks[f"k={k}"] = (res.passed, f"sigma2 {res.sigma2:.4f} >= V1 {res.v1:.4f}*(1-3*{res.se_rel:.3f})")
    v = first_chaos_variance(ChaosContext(2, 2, 0.0, 1.0, 1 / (2 * math.pi)))
    err = abs(v - 1 / (4 * math.pi**2))
    checks["formula"] = (err <= 1e-12, f"|V1 - 1/(4 pi^2)| = {err:.1e}")
    assert record(6, checks, elapsed + time.perf_counter() - start, 45 * 60)


def test_criterion_7_crofton_consistency():
    start = time.perf_counter()
    grid = GridSpec(2, 16.0, SPACING)
    worst = 0.0
    for i in range(20):
        mask = threshold(synthesize(GAUSS, grid, derive_seed(SEED + 7, i)), 0.0)
        a, b = crofton_lkc(mask, 1, rng_seed=i), configuration_lkc1(mask)
        worst = max(worst, abs(a / b - 1))
    checks = {"20 masks": (worst <= 0.05, f"worst relative gap {worst:.4f}")}
    assert record(7, checks, time.perf_counter() - start, 120)


@pytest.fixture(scope="module")
def slice_run():
    plan = ExperimentPlan(GAUSS, 2, (1.0,), (64.0,), SPACING, 500, base_seed=SEED + 8)
    grid = plan.grid(64.0)
    rows = [int(round((y + 64.0) / SPACING)) for y in (-48.0, -16.0, 16.0, 48.0)]
    assert all(0 <= r < grid.shape[0] for r in rows)
    start = time.perf_counter()
    rep = multivariate_slice_clt(plan, rows)
    return rep, time.perf_counter() - start


def test_criterion_8_slice_clt(slice_run):
    rep, elapsed = slice_run
    checks = {}
    for j, (s, ok) in enumerate(zip(rep.coordinate_stats, rep.coordinate_pass)):
        checks[f"slice {j}"] = (ok, f"skew {s[0]:+.3f}, kurt {s[1]:+.3f}, KS p {s[3]:.3f}")
    z = rep.correlation_z(0, 3)
    checks["far correlation"] = (abs(z) <= 3, f"r = {rep.correlation[0, 3]:+.4f}, z = {z:+.2f}")
    assert record(8, checks, elapsed, 20 * 60)


def test_slice_clt_joint_normality(slice_run):
    rep, _ = slice_run
    print(f"Mardia skew p {rep.mardia_skew_p:.3f}, kurtosis p {rep.mardia_kurt_p:.3f}")
    assert rep.mardia_pass(0.01)


def test_criterion_9_theory_exactness():
    start = time.perf_counter()
    x, w = hermite_quadrature(200)
    orth = max(abs(np.sum(w * hermite(n, x) * hermite(m, x))
                   / math.sqrt(math.factorial(n) * math.factorial(m)) - (n == m))
               for n in range(13) for m in range(13))
    xq, wq = hermite_quadrature(60)
    mehler = 0.0
    for n in range(1, 9):
        for rho in (-0.9, -0.5, 0.0, 0.3, 0.9):
            y = rho * xq[:, None] + math.sqrt(1 - rho * rho) * xq[None, :]
            quad = np.sum(wq[:, None] * wq[None, :] * hermite(n, xq)[:, None] * hermite(n, y))
            mehler = max(mehler, abs(quad - mehler_covariance(n, rho)))
    flags = max(abs(flag_coefficient(2, 1) - math.pi / 2), abs(flag_coefficient(3, 1) - 2))
    ls = [first_chaos_variance(ChaosContext(2, 1, 1.0, 1.0, 0.159, l)) for l in (0.1, 1, 10)]
    l_gap = max(abs(v - ls[1]) for v in ls)
    ctx1 = ChaosContext(2, 1, 0.0, 1.0, 1.0)
    spots = [
        (c1_coefficient((0, 0), ctx1), 1 / math.sqrt(2 * math.pi)),
        (c1_coefficient((1, 0), ctx1), 0.0),
        (c1_coefficient((2, 0), ctx1), -0.5 / math.sqrt(2 * math.pi)),
        (c2_first_chaos(ChaosContext(2, 1, 0.0, 1.0, 1.0)), 0.0),
        (c2_first_chaos(ChaosContext(2, 2, 1.0, 1.0, 1.0)), 0.0),
        (c2_first_chaos(ChaosContext(2, 1, 2.0, 1.0, 1.0)), -2 * math.exp(-2) / math.sqrt(2 * math.pi)),
    ]
    spot = max(abs(a - b) for a, b in spots)
    checks = {
        "hermite orthogonality": (orth < 1e-10, f"{orth:.1e}"),
        "mehler": (mehler < 1e-8, f"{mehler:.1e}"),
        "flags": (flags < 1e-12, f"{flags:.1e}"),
        "l-invariance": (l_gap < 1e-12, f"{l_gap:.1e}"),
        "c1/c2 spots": (spot < 1e-12, f"{spot:.1e}"),
    }
    assert record(9, checks, time.perf_counter() - start, 10)


def test_criterion_10_determinism():
    start = time.perf_counter()
    plan = ExperimentPlan(GAUSS, 2, (0.5, 1.0), (3.0, 4.0), 0.25, 8, base_seed=SEED,
                          policy=LkcPolicy(16, 16))
    first = run_experiment(plan)[0].to_json()
    again = run_experiment(plan)[0].to_json()
    eight = run_experiment(plan, workers=8)[0].to_json()
    sample = synthesize(GAUSS, GridSpec(2, 8.0, 0.25), SEED)
    back = decode(encode(sample))
    checks = {
        "rerun": (first == again, f"{len(first)} bytes"),
        "1 vs 8 workers": (first == eight, "report.json bytes"),
        "GRF1 round trip": (back.values.tobytes() == sample.values.tobytes()
                            and back.seed == sample.seed, "payload bytes"),
    }
    assert record(10, checks, time.perf_counter() - start, math.inf)
