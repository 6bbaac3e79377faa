"""Command-line entry point: solve, bench, check-condition, oracle."""
from __future__ import annotations

import argparse
import json
import sys
from contextlib import ExitStack

from . import bench
from .bench import BenchmarkInstance, SolverSettings, brute_force_optimum, solve_instance
from .production import check_separable_condition

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG = 0, 1, 2


def _load_instance(path: str) -> BenchmarkInstance:
    with open(path) as fh:
        return BenchmarkInstance.from_dict(json.load(fh))


def _cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    settings = SolverSettings(
        ellipsoid_eps=args.eps if args.eps is not None else SolverSettings.ellipsoid_eps,
        level_eps=args.level_eps,
        pgd_eps=args.eps if args.eps is not None else SolverSettings.pgd_eps,
        budget=args.budget,
    )
    with ExitStack() as stack:
        trace = None
        if args.trace:
            fh = stack.enter_context(open(args.trace, "w"))
            trace = lambda rec: fh.write(json.dumps(rec) + "\n")
        report = solve_instance(inst, args.method, settings, trace=trace)
    doc = report.to_dict()
    text = json.dumps(doc, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    if report.oracle_calls > settings.budget:
        return EXIT_THRESHOLD
    return EXIT_OK


def _cmd_bench(args) -> int:
    n_max = 10 if args.extended else args.n_max
    settings = SolverSettings(args.ellipsoid_eps, args.level_eps, args.pgd_eps, args.budget)
    methods = tuple(args.methods.split(","))
    return bench.run_benchmark(
        args.suite, args.out, n_min=args.n_min, n_max=n_max, methods=methods, settings=settings,
        gap_threshold=args.gap_threshold, seed=args.seed, qc_samples=args.qc_samples, jobs=args.jobs,
        log=lambda s: print(s, file=sys.stderr),
    )


def _cmd_check(args) -> int:
    inst = _load_instance(args.instance)
    verdict = check_separable_condition(inst.spec, grid_size=args.grid)
    print(json.dumps({"id": inst.id, "status": verdict.status, "reason": verdict.reason, "witness": verdict.witness}, default=float))
    return EXIT_OK if verdict.passed else EXIT_THRESHOLD


def _cmd_oracle(args) -> int:
    inst = _load_instance(args.instance)
    beta, utility = brute_force_optimum(inst.spec, args.step)
    print(json.dumps({"id": inst.id, "step": args.step, "utility": utility, "beta": beta.tolist()}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teamcontract", description="Optimal linear contracts for team production.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("--instance", required=True)
    s.add_argument("--method", choices=["ellipsoid", "pgd"], default="pgd")
    s.add_argument("--eps", type=float, default=None, help="precision (ellipsoid termination width or PGD sweep step)")
    s.add_argument("--level-eps", type=float, default=SolverSettings.level_eps, help="ellipsoid level-grid resolution")
    s.add_argument("--budget", type=int, default=bench.ORACLE_BUDGET)
    s.add_argument("--trace", help="write a JSON-lines trace here")
    s.add_argument("--out", help="write the JSON report here")
    s.set_defaults(func=_cmd_solve)

    b = sub.add_parser("bench", help="run the benchmark suite")
    b.add_argument("--suite", choices=["cd", "ces", "all", "empty"], default="all")
    b.add_argument("--n-min", type=int, default=2)
    b.add_argument("--n-max", type=int, default=6)
    b.add_argument("--extended", action="store_true", help="run up to n = 10")
    b.add_argument("--methods", default="ellipsoid,pgd")
    b.add_argument("--ellipsoid-eps", type=float, default=SolverSettings.ellipsoid_eps)
    b.add_argument("--level-eps", type=float, default=SolverSettings.level_eps)
    b.add_argument("--pgd-eps", type=float, default=SolverSettings.pgd_eps)
    b.add_argument("--budget", type=int, default=bench.ORACLE_BUDGET)
    b.add_argument("--gap-threshold", type=float, default=bench.GAP_THRESHOLD)
    b.add_argument("--seed", type=int, default=bench.DEFAULT_SEED)
    b.add_argument("--qc-samples", type=int, default=10_000)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=_cmd_bench)

    c = sub.add_parser("check-condition", help="probe the separability condition")
    c.add_argument("--instance", required=True)
    c.add_argument("--grid", type=int, default=64)
    c.set_defaults(func=_cmd_check)

    o = sub.add_parser("oracle", help="brute-force grid optimum (n <= 3)")
    o.add_argument("--instance", required=True)
    o.add_argument("--step", type=float, default=1e-2)
    o.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "methods", None):
        bad = set(args.methods.split(",")) - {"ellipsoid", "pgd"}
        if bad:
            parser.error(f"unknown methods: {', '.join(sorted(bad))}")
    try:
        return args.func(args)
    except KeyError as exc:
        print(f"error: missing field {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
