"""Command-line driver: simulate, lkc, theory, experiment, hypotheses.

Exit codes: 0 ok, 2 configuration, 3 synthesis, 4 file format, 5 failure rate.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .covariance import CovarianceError, check_hypotheses
from .experiment import ExperimentError, run_experiment
from .fieldgen import GridError, SynthesisError, synthesize
from .geometry import LkcPolicy, estimate_all_lkcs, threshold
from .grf import FormatError, read_field, write_field
from .theory import theory_table

EXIT_OK, EXIT_CONFIG, EXIT_SYNTHESIS, EXIT_FORMAT, EXIT_FAILURES = 0, 2, 3, 4, 5

THEORY_COLUMNS = ("u", "k", "V1k", "gkf_mean_k", "psi_u", "lambda", "h0", "sojourn_sigma2")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def replication_columns(d: int) -> list[str]:
    return (["index", "seed", "T", "u"] + [f"L{i}" for i in range(d + 1)]
            + [f"method{i}" for i in range(d + 1)] + ["wall_ms"])


def write_replications(path, records, d: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(replication_columns(d))
        for r in records:
            w.writerow([r.index, r.seed, _fmt(float(r.T)), _fmt(float(r.u))]
                       + [_fmt(float(v)) for v in r.lkcs] + list(r.methods) + [_fmt(r.wall_ms)])


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    grid = cfg.grid_spec()
    model = cfg.model()
    seed = cfg.experiment.base_seed if args.seed is None else args.seed
    sample = synthesize(model, grid, seed, workers=args.threads)
    write_field(args.out, sample)
    print(f"GRF1 d={grid.dimension} shape={'x'.join(map(str, grid.shape))} "
          f"spacing={grid.spacing} seed={sample.seed} fingerprint={sample.fingerprint.hex()}"
          + (f" approximate(clipped={sample.clipped_mass:.2e})" if sample.approximate else ""))
    return EXIT_OK


def cmd_lkc(args) -> int:
    sample = read_field(args.field)
    mask = threshold(sample, args.u)
    est = estimate_all_lkcs(mask, LkcPolicy(args.directions, args.offsets, args.seed,
                                            args.intermediate))
    d = sample.grid.dimension
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["u"] + [f"L{i}" for i in range(d + 1)] + [f"method{i}" for i in range(d + 1)]
               + ["spacing", "T"])
    w.writerow([_fmt(float(args.u))] + [_fmt(float(v)) for v in est.values] + est.methods
               + [_fmt(sample.grid.spacing), _fmt(sample.grid.half_extents[0])])
    return EXIT_OK


def cmd_theory(args) -> int:
    cfg = load_config(args.config)
    model = cfg.model()
    grid = cfg.grid_spec()
    us = args.u if args.u else cfg.output.theory_thresholds
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(THEORY_COLUMNS)
    for u in us:
        for row in theory_table(model, tuple(grid.sides), float(u), args.q_max or cfg.experiment.q_max):
            w.writerow([_fmt(row[0]), row[1]] + [_fmt(float(v)) for v in row[2:]])
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    plan = cfg.plan(seed=args.seed, override=True if args.override_hypotheses else None)
    workers = args.threads or cfg.experiment.workers
    report, records = run_experiment(plan, workers=workers)
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    write_replications(out / "replications.csv", records, plan.dimension)
    (out / "report.json").write_text(report.to_json())
    for v in report.verdicts:
        print(f"L{v.lkc} u={v.u:g}: normality {v.normality}, "
              f"convergence {v.convergence}, V1 bound {v.v1_bound}")
    if report.failures:
        print(f"{report.failures} replications failed synthesis", file=sys.stderr)
    return EXIT_OK


def cmd_hypotheses(args) -> int:
    cfg = load_config(args.config)
    report = check_hypotheses(cfg.model())
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True, default=str))
    if not report.all_ok:
        print(f"failing: {', '.join(report.failing())}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lkc-clt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw one field and write it as GRF1")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("lkc", help="estimate LKCs of a stored field's excursion set")
    s.add_argument("field")
    s.add_argument("--u", type=float, required=True)
    s.add_argument("--intermediate", choices=("crofton", "configuration"), default="crofton")
    s.add_argument("--directions", type=int, default=64)
    s.add_argument("--offsets", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_lkc)

    s = sub.add_parser("theory", help="tabulate closed-form quantities as CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--u", type=float, nargs="*")
    s.add_argument("--q-max", type=int)
    s.set_defaults(func=cmd_theory)

    s = sub.add_parser("experiment", help="run a Monte Carlo CLT experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--override-hypotheses", action="store_true")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("hypotheses", help="audit the covariance hypotheses")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_hypotheses)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CovarianceError, GridError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    except SynthesisError as exc:
        print(f"synthesis error: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
