"""Excursion-volume variance against the sojourn chaos series.

    python scripts/run_variance.py --d 1 --T 64 128 256 --n 500
"""

import argparse

from lkc_clt.covariance import IsotropicCovariance
from lkc_clt.experiment import ExperimentPlan, run_experiment
from lkc_clt.theory import sojourn_series


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--T", type=float, nargs="+", default=[64.0, 128.0, 256.0])
    ap.add_argument("--u", type=float, nargs="+", default=[0.0, 1.0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--spacing", type=float, default=0.125)
    ap.add_argument("--q-max", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    model = IsotropicCovariance("gaussian", 1.0, dimension=args.d)
    plan = ExperimentPlan(model, args.d, tuple(args.u), tuple(args.T), args.spacing, args.n,
                          base_seed=args.seed, lkc_indices=(args.d,), q_max=args.q_max)
    report, _ = run_experiment(plan, workers=args.workers)
    for u in args.u:
        series = sojourn_series(model, u, args.q_max)
        print(f"u={u:g}: series {series.value:.5f} (tail {series.tail:.1e})")
        for T in args.T:
            r = report.row(args.d, u, T)
            print(f"  T={T:g}: var {r.variance:.5f}  ratio {r.variance / series.value:.3f}")


if __name__ == "__main__":
    main()
