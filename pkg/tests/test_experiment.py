import math

import numpy as np
import pytest

from lkc_clt import experiment as ex
from lkc_clt.covariance import HypothesisError, IsotropicCovariance
from lkc_clt.experiment import (
    Battery,
    CltReport,
    DegenerateSampleError,
    ExperimentError,
    ExperimentPlan,
    StatRow,
    battery_passes,
    first_chaos_bound_check,
    mardia_test,
    multivariate_slice_clt,
    normality_stats,
    reduce_records,
    run_experiment,
    run_replications,
    variance_trajectory,
)
from lkc_clt.fieldgen import SynthesisError
from lkc_clt.geometry import LkcPolicy
from lkc_clt.theory import ChaosContext, first_chaos_variance

GAUSS = IsotropicCovariance("gaussian", 1.0)
SMALL = LkcPolicy(directions=8, offsets_per_direction=8)


def small_plan(**kw):
    base = dict(covariance=GAUSS, dimension=2, thresholds=(0.5,), schedule=(3.0,),
                spacing=0.25, replications=2, base_seed=17, policy=SMALL)
    base.update(kw)
    return ExperimentPlan(**base)


def test_plan_validation():
    with pytest.raises(ValueError):
        small_plan(schedule=(4.0, 3.0))
    with pytest.raises(ValueError):
        small_plan(centering="median")
    with pytest.raises(ValueError):
        small_plan(lkc_indices=(3,))
    assert small_plan().covariance.dimension == 2


def test_report_bytes_reproducible():
    plan = small_plan()
    a, _ = run_experiment(plan)
    b, _ = run_experiment(plan)
    assert a.to_json() == b.to_json()
    assert '"schema": "clt-report/1"' in a.to_json()


def test_worker_count_invariance():
    plan = small_plan(replications=6, schedule=(2.0, 3.0))
    one, rec1 = run_experiment(plan, workers=1)
    many, rec2 = run_experiment(plan, workers=3)
    assert one.to_json() == many.to_json()
    assert [(r.index, r.lkcs) for r in rec1] == [(r.index, r.lkcs) for r in rec2]


def test_seed_isolation_under_permuted_execution():
    plan = small_plan(replications=4)
    records, _ = run_replications(plan)
    for i in reversed(range(4)):
        alone = ex._replicate(plan, 3.0, i)
        mine = [r for r in records if r.index == i]
        assert [(r.seed, r.lkcs) for r in alone] == [(r.seed, r.lkcs) for r in mine]


def test_empty_excursions():
    plan = small_plan(thresholds=(8.0,), replications=3)
    report, records = run_experiment(plan)
    assert all(v == 0 for r in records for v in r.lkcs)
    for row in report.rows:
        assert row.variance == 0 and row.degenerate and row.normal is None


def test_normalisation_matches_raw_variance():
    plan = small_plan(replications=5)
    report, records = run_experiment(plan)
    for i in range(3):
        raw = np.var([r.lkcs[i] for r in records], ddof=1)
        row = report.row(i, 0.5)
        assert row.variance * row.volume == pytest.approx(raw, rel=1e-12)


def test_subset_of_curvatures():
    plan = small_plan(lkc_indices=(2,))
    _, records = run_experiment(plan)
    assert math.isnan(records[0].lkcs[1]) and records[0].methods == ["", "", "cell_volume"]


def test_gkf_centering_is_recorded():
    plan = small_plan(centering="gkf")
    report, _ = run_experiment(plan)
    assert report.plan["centering"] == "gkf"


def test_hypothesis_audit_gate():
    heavy = IsotropicCovariance("cauchy", 1.0, tail_exponent=1.5)
    with pytest.raises(HypothesisError, match="H2"):
        run_experiment(small_plan(covariance=heavy))


def test_failure_policy(monkeypatch):
    real = ex.synthesize

    def flaky(model, grid, seed, workers=1):
        if seed % 7 == 0:
            raise SynthesisError("boom")
        return real(model, grid, seed, workers)

    plan = small_plan(replications=40)
    seeds = [ex.derive_seed(plan.base_seed, i) for i in range(40)]
    monkeypatch.setattr(ex, "synthesize", flaky)
    failed = sum(s % 7 == 0 for s in seeds)
    assert failed > 0
    with pytest.raises(ExperimentError):
        run_experiment(plan)
    records, failures = run_replications(plan)
    assert failures == failed and len(records) == 40 - failed


def test_normality_battery_controls(rng):
    normal = rng.standard_normal(10_000)
    skew, kurt, _, p = normality_stats(normal)
    assert abs(skew) < 0.08 and abs(kurt) < 0.15 and p > 0.01
    assert battery_passes((skew, kurt, 0.0, p))
    chi2 = rng.standard_normal(10_000) ** 2
    s = normality_stats(chi2)
    assert s[0] > 2 and s[3] < 1e-6
    assert not battery_passes(s)
    with pytest.raises(DegenerateSampleError):
        normality_stats(np.ones(100))
    with pytest.raises(ValueError):
        normality_stats(normal[:10])


def test_lattice_continuity_correction(rng):
    counts = rng.binomial(60, 0.5, size=3000).astype(float)
    raw = normality_stats(counts)
    corrected = normality_stats(counts, lattice_step=1.0)
    assert raw[3] < 1e-6
    assert corrected[3] > 0.01


def test_variance_trajectory():
    x = np.arange(60.0)
    flat = variance_trajectory({8.0: (x, 4.0), 16.0: (x, 4.0)})
    assert flat.relative_changes == [0.0] and flat.converged
    # raw variance proportional to the domain volume gives a flat normalised curve
    scaled = variance_trajectory({1.0: (x, 1.0), 2.0: (2 * x, 4.0), 4.0: (4 * x, 16.0)})
    assert np.allclose(scaled.relative_changes, 0) and scaled.converged
    jump = variance_trajectory({1.0: (x, 1.0), 2.0: (2 * x, 1.0)}, tol=0.15)
    assert not jump.converged
    with pytest.raises(ValueError):
        variance_trajectory({1.0: (x, 1.0)})


def synthetic_report(variance, n, k=1, u=1.0, d=2):
    row = StatRow(d - k, k, u, 32.0, 4096.0, n, 0.0, variance, 0.0, 0.0, 0.0, 1.0, False, True)
    return CltReport({"dimension": d}, [row], [], [], [], 0, 0, {})


def test_first_chaos_bound_check():
    ctx = ChaosContext(2, 1, 1.0, 1.0, 1 / (2 * math.pi))
    v1 = first_chaos_variance(ctx)
    assert first_chaos_bound_check(synthetic_report(v1, 500), ctx).passed
    assert not first_chaos_bound_check(synthetic_report(v1 / 2, 10**8), ctx).passed
    zero = ChaosContext(2, 2, 1.0, 1.0, 1 / (2 * math.pi))
    check = first_chaos_bound_check(synthetic_report(1e-9, 500, k=2), zero)
    assert check.passed and check.v1 == 0.0
    with pytest.raises(ValueError):
        first_chaos_bound_check(synthetic_report(v1, 500), ChaosContext(3, 1, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        first_chaos_bound_check(synthetic_report(v1, 100), ctx)


def test_mardia_on_gaussian_and_skewed_data(rng):
    x = rng.standard_normal((800, 3)) @ np.array([[1, 0.3, 0], [0, 1, 0.2], [0, 0, 1]])
    _, sp, _, kp = mardia_test(x)
    assert sp > 0.01 and kp > 0.01
    _, sp, _, _ = mardia_test(rng.exponential(size=(800, 3)))
    assert sp < 1e-6


def test_slice_clt_small():
    plan = small_plan(thresholds=(1.0,), schedule=(6.0,), replications=60)
    rep = multivariate_slice_clt(plan, [4, 4, 44])
    assert rep.correlation[0, 1] == 1.0
    assert rep.covariance.shape == (3, 3)
    assert len(rep.coordinate_stats) == 3
    with pytest.raises(ValueError):
        multivariate_slice_clt(plan, [4])


def test_reduction_reports_theory_rows():
    plan = small_plan(replications=3, schedule=(2.0, 3.0))
    report, records = run_experiment(plan)
    again = reduce_records(plan, list(reversed(records)))
    assert again.to_dict()["rows"] == report.to_dict()["rows"]
    vol = [t for t in report.theory if t.lkc == 2][0]
    assert vol.sojourn is not None and vol.slice_dim == 0
    assert len(report.trajectories) == 3
