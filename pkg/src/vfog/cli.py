"""Command-line entry point: ``vfog run | gridsearch | certify | list-presets``."""

from __future__ import annotations

import argparse
import os
import sys

from . import bench, certify, problems
from .core import ConfigError


def _add_common(sub):
    sub.add_argument("--config", required=True, help="YAML run config")
    sub.add_argument("--out", default=None, help="output directory (overrides config)")
    sub.add_argument("--jobs", type=int, default=1,
                     help="parallel workers (env VFOG_JOBS overrides)")
    sub.add_argument("--seed-offset", type=int, default=0,
                     help="shift every configured seed by this amount")


def _jobs(args) -> int:
    env = os.environ.get("VFOG_JOBS")
    if env is not None:
        return max(1, int(env))
    return max(1, args.jobs)


def _load(args) -> bench.RunConfig:
    cfg = bench.load_config(args.config)
    if args.seed_offset:
        cfg.seeds = [s + args.seed_offset for s in cfg.seeds]
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    result = bench.cli_run(cfg, out_dir=args.out, jobs=_jobs(args))
    print(f"wrote {result.csv_path} and {result.mean_csv_path}")
    print(f"{'algorithm':<12} {'mean final residual^2':>24}")
    for algo, val in result.summary.items():
        print(f"{algo:<12} {val:>24.6e}")
    if result.failures:
        print("diverged runs:", file=sys.stderr)
        for f in result.failures:
            print(f"  {f}", file=sys.stderr)
        return 1
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _load(args)
    result = bench.cli_gridsearch(cfg, jobs=_jobs(args))
    for algo, rows in result.table.items():
        print(f"# {algo}")
        print(f"{'eta':>14} {'final residual^2':>20}")
        for eta, score in rows:
            print(f"{eta:>14.6e} {score:>20.6e}")
        print(f"best eta for {algo}: {result.best[algo]:.6e}")
    return 0


def cmd_certify(args) -> int:
    if args.spec == "identity":
        import numpy as np

        from .core import AssumptionMeta, FiniteSumProblem, ZeroResolvent
        from .problems import LinearFiniteSum

        p = args.dim
        op = LinearFiniteSum(np.stack([np.eye(p)] * args.components),
                             np.zeros((args.components, p)))
        prob = FiniteSumProblem(op=op, resolvent=ZeroResolvent(),
                                meta=AssumptionMeta(L=1.0), name="identity")
    elif args.spec == "random":
        prob = problems.build_linear_random(p=args.dim, n=args.components,
                                            seed=args.seed)
    elif args.spec == "linear-exam1":
        prob = problems.build_linear_example1()
    else:
        raise ConfigError(f"unknown certify target {args.spec!r}; "
                          "use linear-exam1 | identity | random")

    suggestion = certify.suggest_rho(prob)
    print(f"problem: {prob.name}")
    if not suggestion.feasible:
        print(f"no certificate: {suggestion.reason}")
        return 1
    check = certify.verify_cohypo_linear(prob, suggestion.rho_n, suggestion.rho_c)
    print(f"suggested rho_n = {suggestion.rho_n:.6g}, rho_c = {suggestion.rho_c:.6g}")
    print(f"verified: {check.feasible} (min eigenvalue {check.min_eigenvalue:.3e}, "
          f"tolerance {check.tolerance:.1e})")
    if args.rho_n is not None and args.rho_c is not None:
        user = certify.verify_cohypo_linear(prob, args.rho_n, args.rho_c)
        print(f"user pair ({args.rho_n:g}, {args.rho_c:g}) feasible: {user.feasible} "
              f"(min eigenvalue {user.min_eigenvalue:.3e})")
    return 0


def cmd_list_presets(_args) -> int:
    print("problem presets:")
    for name in sorted(problems.PROBLEM_PRESETS):
        print(f"  {name}")
    print("algorithms:")
    for name in bench.ALGORITHMS:
        print(f"  {name}  ({bench.LEGEND_NAMES.get(name, name)})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vfog", description="benchmark harness for stochastic "
        "generalized-equation solvers")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="execute a benchmark config")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_grid = subs.add_parser("gridsearch", help="stepsize grid search")
    _add_common(p_grid)
    p_grid.set_defaults(func=cmd_gridsearch)

    p_cert = subs.add_parser("certify", help="monotonicity-defect certificates "
                                             "for linear instances")
    p_cert.add_argument("spec", help="linear-exam1 | identity | random")
    p_cert.add_argument("--seed", type=int, default=0)
    p_cert.add_argument("--dim", type=int, default=8)
    p_cert.add_argument("--components", type=int, default=4)
    p_cert.add_argument("--rho-n", dest="rho_n", type=float, default=None)
    p_cert.add_argument("--rho-c", dest="rho_c", type=float, default=None)
    p_cert.set_defaults(func=cmd_certify)

    p_list = subs.add_parser("list-presets", help="show presets and algorithms")
    p_list.set_defaults(func=cmd_list_presets)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
