"""Command-line entry point.

Subcommands: ``simulate``, ``sweep``, ``bounds`` and ``topology``. Log
verbosity follows ``SDFEEL_LOG_LEVEL`` (default ``WARNING``). Exit status is 0
on success, 2 on a configuration error and 3 on a numerical failure.
"""

import argparse
import csv
import logging
import os
import sys
import warnings
from dataclasses import replace

import numpy as np

from ._errors import ConfigError, InadmissibleLearningRateError, InvalidArgumentError
from .bounds import (
    BoundParams,
    SCAN_AXES,
    check_learning_rate,
    monotonicity_scan,
    theorem_bound,
    write_scan_csv,
)
from .config import SWEEP_AXES, SweepSpec, parse_config
from .harness import estimate_inputs, parse_axis_values, run_experiment, run_sweep
from .learner import AssumptionConstants
from .topology import build_mixing_matrix

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
BREAKDOWN_COLUMNS = ("zeta", "alpha", "tau1", "tau2", "eta", "K", "L", "sigma", "kappa", "delta",
                     "Lambda", "V1", "V2", "V3", "admissible", "optimization", "sampling",
                     "drift_noise", "drift_noniid", "rhs_total")

logger = logging.getLogger("sdfeel")


def _setup_logging():
    level = os.environ.get("SDFEEL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if not logger.isEnabledFor(logging.INFO):
        warnings.filterwarnings("ignore", module=r"sdfeel\.")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma list of integers, got {text!r}") from None


def cmd_simulate(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.scheme is not None:
        cfg = cfg.with_value("scheme", args.scheme)
    out = run_experiment(cfg, args.out)
    for path in out.files:
        print(path)
    return EXIT_OK


def cmd_sweep(args):
    cfg = parse_config(args.config)
    values = parse_axis_values(args.axis, args.values)
    seeds = _int_list(args.seeds) if args.seeds else [cfg.seed]
    spec = SweepSpec(cfg, args.axis, tuple(values), tuple(seeds))
    out_path = args.out or os.path.join(cfg.output, f"sweep_{args.axis}.csv")
    res = run_sweep(spec, out_path, jobs=args.jobs)
    print(res.path)
    for value, seed, err in res.failures:
        print(f"failed: {args.axis}={value} seed={seed}: {err}", file=sys.stderr)
    return EXIT_OK


def _base_params(cfg, problem, graph):
    mixing = build_mixing_matrix(graph, problem.cluster_sizes)
    inputs = estimate_inputs(cfg, problem)
    s = cfg.schedule
    return BoundParams(mixing.zeta, s.alpha, s.tau1, s.tau2, cfg.train.eta, cfg.train.iterations,
                       AssumptionConstants(**inputs["constants"]), problem.weights,
                       inputs["delta"])


def cmd_bounds(args):
    cfg = parse_config(args.config)
    params = _base_params(cfg, cfg.problem(), cfg.graph())
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.scan:
        if not args.values:
            raise ConfigError("--scan needs --values")
        grid = [float(v) for v in args.values.split(",") if v.strip()]
        write_scan_csv(sys.stdout, monotonicity_scan(params, args.scan, grid))
        return EXIT_OK
    c = params.constants
    head = [params.zeta, params.alpha, params.tau1, params.tau2, params.eta, params.K,
            c.L, c.sigma, c.kappa, params.delta]
    w.writerow(BREAKDOWN_COLUMNS)
    if not check_learning_rate(params):
        w.writerow([repr(v) for v in head] + ["nan"] * 4 + ["false"] + ["nan"] * 5)
        chk = check_learning_rate(params)
        print(f"learning rate inadmissible: 1-eta*L-8eta^2L^2V2={chk.first_lhs!r}, "
              f"1-16eta^2L^2V3={chk.second_lhs!r}", file=sys.stderr)
        return EXIT_NUMERIC
    b = theorem_bound(params)
    w.writerow([repr(v) for v in head]
               + [repr(b.Lambda), repr(b.V1), repr(b.V2), repr(b.V3), "true",
                  repr(b.optimization), repr(b.sampling), repr(b.drift_noise),
                  repr(b.drift_noniid), repr(b.rhs_total)])
    return EXIT_OK


def cmd_topology(args):
    cfg = parse_config(args.config)
    problem = cfg.problem()
    mixing = build_mixing_matrix(cfg.graph(), problem.cluster_sizes)
    w = csv.writer(sys.stdout, lineterminator="\n")
    print("# mixing matrix P")
    for row in mixing.matrix:
        w.writerow([repr(float(v)) for v in row])
    print(f"# zeta\n{mixing.zeta!r}")
    print("# eigenvalues")
    w.writerow([repr(float(v)) for v in np.asarray(mixing.eigenvalues)])
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sdfeel", description="Semi-decentralized federated edge "
                                "learning simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configuration and write trace CSVs")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory (default: config 'output')")
    s.add_argument("--scheme", choices=("sdfeel", "fedavg", "feel", "hierfavg", "all"))
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="vary one axis over values and seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    s.add_argument("--values", required=True, help="comma-separated list")
    s.add_argument("--seeds", help="comma-separated master seeds (default: config seed)")
    s.add_argument("--out", help="output CSV path")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("bounds", help="print the convergence-bound breakdown as CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--scan", choices=SCAN_AXES)
    s.add_argument("--values", help="comma-separated grid for --scan")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("topology", help="print the mixing matrix, zeta and eigenvalues")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_topology)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, OverflowError, InadmissibleLearningRateError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
