"""Monte Carlo harness for central limit behaviour of excursion-set curvatures.

Each replication is a pure function of ``(plan, global index)``: the field seed
is ``derive_seed(base_seed, index)`` and the Crofton generator is seeded from
the same value, so results are identical whatever the worker count or
execution order.  Reduction is a fold in index order.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from .covariance import (
    HypothesisError,
    IsotropicCovariance,
    check_hypotheses,
    second_spectral_moment,
    spectral_density,
)
from .fieldgen import GridSpec, SynthesisError, derive_seed, synthesize
from .geometry import (
    LkcPolicy,
    configuration_lkc1,
    crofton_lkc,
    estimate_all_lkcs,
    euler_characteristic,
    slice_epcs,
    threshold,
    volume,
)
from .theory import ChaosContext, expected_lkc, first_chaos_variance, sojourn_series

REPORT_SCHEMA = "clt-report/1"
FAILURE_RATE_LIMIT = 0.01
KS_CAVEAT = ("KS p-values use the asymptotic Kolmogorov law with mean and variance "
             "fitted from the same sample (Lilliefors effect): they are conservative.")


class ExperimentError(RuntimeError):
    pass


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class Battery:
    """Acceptance thresholds of the normality battery."""

    max_abs_skew: float = 0.25
    max_abs_kurtosis: float = 0.5
    min_ks_p: float = 0.01


@dataclass(frozen=True)
class ExperimentPlan:
    covariance: IsotropicCovariance
    dimension: int
    thresholds: tuple[float, ...]
    schedule: tuple[float, ...]
    spacing: float
    replications: int
    base_seed: int = 0
    policy: LkcPolicy = LkcPolicy()
    centering: str = "empirical"  # or "gkf"
    lkc_indices: tuple[int, ...] | None = None
    convergence_tol: float = 0.15
    battery: Battery = Battery()
    q_max: int = 40
    override_hypotheses: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if not self.schedule or any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("schedule must be nonempty and strictly increasing")
        if not self.thresholds:
            raise ValueError("at least one threshold is required")
        if self.centering not in ("empirical", "gkf"):
            raise ValueError(f"unknown centering {self.centering!r}")
        if self.lkc_indices is not None and not all(0 <= i <= self.dimension for i in self.lkc_indices):
            raise ValueError("lkc_indices outside 0..d")
        object.__setattr__(self, "covariance", self.covariance.with_dimension(self.dimension))

    @property
    def indices(self) -> tuple[int, ...]:
        if self.lkc_indices is None:
            return tuple(range(self.dimension + 1))
        return tuple(sorted(set(self.lkc_indices)))

    def grid(self, half_extent: float) -> GridSpec:
        return GridSpec(self.dimension, half_extent, self.spacing)

    def to_dict(self) -> dict:
        return {
            "covariance": self.covariance.params(),
            "dimension": self.dimension,
            "thresholds": list(self.thresholds),
            "schedule": list(self.schedule),
            "spacing": self.spacing,
            "replications": self.replications,
            "base_seed": self.base_seed,
            "policy": asdict(self.policy),
            "centering": self.centering,
            "lkc_indices": list(self.indices),
            "convergence_tol": self.convergence_tol,
            "battery": asdict(self.battery),
            "q_max": self.q_max,
            "override_hypotheses": self.override_hypotheses,
        }


@dataclass
class ReplicationRecord:
    index: int
    seed: int
    T: float
    u: float
    lkcs: list[float]
    methods: list[str]
    wall_ms: float
    approximate: bool = False


@dataclass
class StatRow:
    lkc: int
    slice_dim: int
    u: float
    T: float
    volume: float
    n: int
    mean: float
    variance: float  # of the normalised statistic
    skewness: float | None
    excess_kurtosis: float | None
    ks_statistic: float | None
    ks_p_value: float | None
    degenerate: bool
    normal: bool | None


@dataclass
class TheoryRow:
    lkc: int
    slice_dim: int
    u: float
    v1: float
    gkf_mean: dict
    sojourn: float | None
    sojourn_tail: float | None


@dataclass
class Verdict:
    lkc: int
    u: float
    normality: str
    convergence: str
    v1_bound: str
    v1_margin: float | None


@dataclass
class CltReport:
    plan: dict
    rows: list[StatRow]
    theory: list[TheoryRow]
    trajectories: list[dict]
    verdicts: list[Verdict]
    failures: int
    approximate: int
    hypotheses: dict
    schema: str = REPORT_SCHEMA
    caveat: str = KS_CAVEAT

    def row(self, lkc: int, u: float, T: float | None = None) -> StatRow:
        matches = [r for r in self.rows if r.lkc == lkc and r.u == u and (T is None or r.T == T)]
        if not matches:
            raise KeyError(f"no row for L_{lkc} at u={u}, T={T}")
        return max(matches, key=lambda r: r.T)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "plan": self.plan,
            "hypotheses": self.hypotheses,
            "failures": self.failures,
            "approximate": self.approximate,
            "caveat": self.caveat,
            "rows": [asdict(r) for r in self.rows],
            "theory": [asdict(r) for r in self.theory],
            "trajectories": self.trajectories,
            "verdicts": [asdict(v) for v in self.verdicts],
        }

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _finite(obj):
    """Replace non-finite floats by ``None`` so the JSON is standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


# ---------------------------------------------------------------- statistics

def _ks_lattice(x, mean, sd, step):
    """KS distance with a continuity correction for values on a lattice."""
    values, counts = np.unique(x, return_counts=True)
    ecdf = np.cumsum(counts) / len(x)
    below = np.concatenate([[0.0], ecdf[:-1]])
    upper = stats.norm.cdf((values + step / 2 - mean) / sd)
    lower = stats.norm.cdf((values - step / 2 - mean) / sd)
    return float(max(np.abs(ecdf - upper).max(), np.abs(below - lower).max()))


def normality_stats(samples, lattice_step: float | None = None):
    """Skewness, excess kurtosis, KS statistic and p-value against a fitted normal.

    Moments carry the usual small-sample bias corrections.  ``lattice_step``
    applies a continuity correction for integer-valued statistics.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 50:
        raise ValueError("normality battery needs at least 50 samples")
    mean = x.mean()
    sd = x.std(ddof=1)
    if not sd > 0 or np.ptp(x) == 0:
        raise DegenerateSampleError("degenerate sample: zero variance")
    skew = float(stats.skew(x, bias=False))
    kurt = float(stats.kurtosis(x, fisher=True, bias=False))
    if lattice_step:
        d = _ks_lattice(x, mean, sd, lattice_step)
    else:
        d = float(stats.kstest(x, "norm", args=(mean, sd)).statistic)
    p = float(special.kolmogorov(d * math.sqrt(n)))
    return skew, kurt, d, min(max(p, 0.0), 1.0)


def battery_passes(stats_tuple, battery: Battery = Battery()) -> bool:
    skew, kurt, _, p = stats_tuple
    return (abs(skew) < battery.max_abs_skew and abs(kurt) < battery.max_abs_kurtosis
            and p > battery.min_ks_p)


@dataclass
class Trajectory:
    points: list[tuple[float, float]]
    relative_changes: list[float]
    converged: bool


def variance_trajectory(groups, tol: float = 0.15) -> Trajectory:
    """Normalised variances across domain sizes.

    ``groups`` maps ``T`` to ``(raw samples, domain volume)``.
    """
    if len(groups) < 2:
        raise ValueError("need at least two domain sizes")
    points = []
    for T in sorted(groups):
        samples, vol = groups[T]
        points.append((float(T), float(np.var(samples, ddof=1)) / vol))
    changes = []
    for (_, a), (_, b) in zip(points, points[1:]):
        changes.append(abs(b - a) / a if a > 0 else (0.0 if b == 0 else math.inf))
    return Trajectory(points, changes, changes[-1] <= tol)


@dataclass
class BoundCheck:
    passed: bool
    margin: float
    v1: float
    sigma2: float
    se_rel: float


def first_chaos_bound_check(report: CltReport, ctx: ChaosContext) -> BoundCheck:
    """Check ``sigma^2 >= V_1^k (1 - 3 sqrt(2/(N-1)))`` at the largest domain."""
    if report.plan["dimension"] != ctx.d:
        raise ValueError("context dimension does not match the report")
    row = report.row(ctx.d - ctx.k, ctx.u)
    if row.n < 200:
        raise ValueError("bound check needs N >= 200")
    v1 = first_chaos_variance(ctx)
    se_rel = math.sqrt(2 / (row.n - 1))
    margin = row.variance - v1 * (1 - 3 * se_rel)
    return BoundCheck(margin >= 0, margin, v1, row.variance, se_rel)


# ---------------------------------------------------------------- replication

def _replicate(plan: ExperimentPlan, T: float, index: int):
    seed = derive_seed(plan.base_seed, index)
    start = time.perf_counter()
    try:
        sample = synthesize(plan.covariance, plan.grid(T), seed)
    except SynthesisError:
        return None
    out = []
    for u in plan.thresholds:
        mask = threshold(sample, u)
        pol = LkcPolicy(plan.policy.directions, plan.policy.offsets_per_direction,
                        seed, plan.policy.intermediate)
        lkcs = _selected_lkcs(mask, pol, plan.indices)
        out.append(ReplicationRecord(index, seed, T, u, lkcs[0], lkcs[1],
                                     0.0, sample.approximate))
    wall = (time.perf_counter() - start) * 1e3
    for r in out:
        r.wall_ms = round(wall / len(out), 3)
    return out


def _selected_lkcs(mask, policy, indices):
    d = mask.dimension
    if set(indices) == set(range(d + 1)):
        est = estimate_all_lkcs(mask, policy)
        return est.values, est.methods
    values = [math.nan] * (d + 1)
    methods = [""] * (d + 1)
    for i in indices:
        if i == 0:
            values[i], methods[i] = float(euler_characteristic(mask)), "cubical_epc"
        elif i == d:
            values[i], methods[i] = volume(mask), "cell_volume"
        elif policy.intermediate == "configuration" and d == 2:
            values[i], methods[i] = configuration_lkc1(mask), "configuration_count"
        else:
            values[i] = crofton_lkc(mask, d - i, policy.directions,
                                    policy.offsets_per_direction, (policy.rng_seed, i))
            methods[i] = "crofton_slice"
    return values, methods


def _jobs(plan):
    index = 0
    for T in plan.schedule:
        for _ in range(plan.replications):
            yield T, index
            index += 1


def _run_job(args):
    plan, T, index = args
    return index, _replicate(plan, T, index)


def run_replications(plan: ExperimentPlan, workers: int = 1):
    """Execute every replication; returns (records, failures) in index order."""
    jobs = [(plan, T, i) for T, i in _jobs(plan)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = dict(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = dict(map(_run_job, jobs))
    records, failures = [], 0
    for i in sorted(results):
        if results[i] is None:
            failures += 1
        else:
            records.extend(results[i])
    return records, failures


def _audit(plan: ExperimentPlan) -> dict:
    report = check_hypotheses(plan.covariance)
    out = report.to_dict()
    out["override"] = plan.override_hypotheses
    if not report.all_ok and not plan.override_hypotheses:
        raise HypothesisError(f"hypotheses fail: {', '.join(report.failing())}")
    return out


def run_experiment(plan: ExperimentPlan, workers: int = 1):
    """Run the plan and reduce it to a :class:`CltReport`."""
    hyp = _audit(plan)
    records, failures = run_replications(plan, workers)
    total = len(plan.schedule) * plan.replications
    if failures > FAILURE_RATE_LIMIT * total:
        raise ExperimentError(f"{failures} of {total} replications failed synthesis")
    return reduce_records(plan, records, failures, hyp), records


def reduce_records(plan: ExperimentPlan, records, failures: int = 0, hypotheses=None) -> CltReport:
    d = plan.dimension
    by_key = {}
    approximate = 0
    for r in records:
        approximate += r.approximate
        by_key.setdefault((r.u, r.T), []).append(r)
    rows, theory, trajectories, verdicts = [], [], [], []
    lam = second_spectral_moment(plan.covariance)
    h0 = spectral_density(plan.covariance, 0.0)
    for u in plan.thresholds:
        sojourn = sojourn_series(plan.covariance, u, plan.q_max)
        for i in plan.indices:
            k = d - i
            groups = {}
            gkf = {}
            for T in plan.schedule:
                recs = sorted(by_key.get((u, T), []), key=lambda r: r.index)
                grid = plan.grid(T)
                vol = grid.volume
                x = np.array([r.lkcs[i] for r in recs])
                gkf_mean = expected_lkc(plan.covariance, grid.sides, u, i)
                gkf[str(T)] = gkf_mean
                groups[T] = (x, vol)
                rows.append(_stat_row(plan, i, u, T, vol, x, gkf_mean))
            ctx = ChaosContext(d, k, u, lam, h0)
            v1 = first_chaos_variance(ctx)
            theory.append(TheoryRow(i, k, u, v1, gkf,
                                    sojourn.value if i == d else None,
                                    sojourn.tail if i == d else None))
            traj = None
            if len(plan.schedule) >= 2 and all(len(g[0]) >= 2 for g in groups.values()):
                traj = variance_trajectory(groups, plan.convergence_tol)
                trajectories.append({"lkc": i, "u": u, "points": traj.points,
                                     "relative_changes": traj.relative_changes,
                                     "converged": traj.converged})
            verdicts.append(_verdict(plan, rows[-1], traj, v1))
    return CltReport(plan.to_dict(), rows, theory, trajectories, verdicts, failures,
                     approximate, hypotheses or {})


def _stat_row(plan, i, u, T, vol, x, gkf_mean):
    n = len(x)
    center = x.mean() if plan.centering == "empirical" else gkf_mean
    z = (x - center) / math.sqrt(vol)
    var = float(np.var(x, ddof=1)) / vol if n > 1 else math.nan
    skew = kurt = ks = p = None
    degenerate = not (n > 1 and np.ptp(x) > 0)
    normal = None
    if not degenerate and n >= 50:
        step = 1 / math.sqrt(vol) if i == 0 else None
        s = normality_stats(z, step)
        skew, kurt, ks, p = s
        normal = battery_passes(s, plan.battery)
    return StatRow(i, plan.dimension - i, u, T, vol, n, float(x.mean()) if n else math.nan,
                   var, skew, kurt, ks, p, degenerate, normal)


def _verdict(plan, row, traj, v1):
    def flag(ok):
        return "SKIP" if ok is None else ("PASS" if ok else "FAIL")

    bound, margin = None, None
    if row.n >= 200 and not math.isnan(row.variance):
        margin = row.variance - v1 * (1 - 3 * math.sqrt(2 / (row.n - 1)))
        bound = margin >= 0
    return Verdict(row.lkc, row.u, flag(row.normal),
                   flag(traj.converged if traj else None), flag(bound), margin)


# ---------------------------------------------------------------- slices

@dataclass
class SliceCltReport:
    rows: list[int]
    u: float
    T: float
    n: int
    coordinate_stats: list[tuple]
    coordinate_pass: list[bool]
    covariance: np.ndarray
    correlation: np.ndarray
    mardia_skew: float
    mardia_skew_p: float
    mardia_kurt_z: float
    mardia_kurt_p: float

    def correlation_z(self, a: int, b: int) -> float:
        """Fisher z-score of the empirical correlation between two coordinates."""
        r = float(np.clip(self.correlation[a, b], -1 + 1e-15, 1 - 1e-15))
        return math.atanh(r) * math.sqrt(self.n - 3)

    def mardia_pass(self, level: float = 0.01) -> bool:
        return self.mardia_skew_p > level and self.mardia_kurt_p > level


def mardia_test(x: np.ndarray):
    """Mardia multivariate skewness and kurtosis with their asymptotic p-values."""
    n, p = x.shape
    c = x - x.mean(axis=0)
    s = c.T @ c / n
    g = c @ np.linalg.pinv(s) @ c.T
    b1 = float((g**3).sum()) / n**2
    b2 = float((np.diag(g) ** 2).sum()) / n
    rank = np.linalg.matrix_rank(s)
    skew_stat = n * b1 / 6
    df = rank * (rank + 1) * (rank + 2) / 6
    skew_p = float(stats.chi2.sf(skew_stat, df))
    kurt_z = (b2 - rank * (rank + 2)) / math.sqrt(8 * rank * (rank + 2) / n)
    kurt_p = float(2 * stats.norm.sf(abs(kurt_z)))
    return skew_stat, skew_p, kurt_z, kurt_p


def _correlation(cov):
    v = np.diag(cov)
    return cov / np.sqrt(np.outer(v, v))


def _slice_job(args):
    plan, T, index, rows = args
    seed = derive_seed(plan.base_seed, index)
    try:
        sample = synthesize(plan.covariance, plan.grid(T), seed)
    except SynthesisError:
        return index, None
    return index, slice_epcs(sample, plan.thresholds[0], [{0: r} for r in rows])


def multivariate_slice_clt(plan: ExperimentPlan, flats, workers: int = 1) -> SliceCltReport:
    """Joint behaviour of the EPCs of parallel lattice lines.

    ``flats`` are row indices along axis 0; each slice is a full line at the
    first threshold of the plan and the largest domain of the schedule.
    """
    flats = [int(f) for f in flats]
    if len(flats) < 2:
        raise ValueError("need at least two flats")
    if plan.dimension != 2:
        raise ValueError("slice CLT is implemented for d = 2")
    T = plan.schedule[-1]
    grid = plan.grid(T)
    jobs = [(plan, T, i, flats) for i in range(plan.replications)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = dict(pool.map(_slice_job, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = dict(map(_slice_job, jobs))
    vectors = np.array([results[i] for i in sorted(results) if results[i] is not None], dtype=float)
    length = grid.sides[1]
    z = (vectors - vectors.mean(axis=0)) / math.sqrt(length)
    step = 1 / math.sqrt(length)
    coord = [normality_stats(z[:, j], step) for j in range(z.shape[1])]
    cov = np.cov(z, rowvar=False)
    ms, msp, mk, mkp = mardia_test(z)
    return SliceCltReport(flats, plan.thresholds[0], T, len(z), coord,
                          [battery_passes(c, plan.battery) for c in coord], cov,
                          _correlation(cov), ms, msp, mk, mkp)
