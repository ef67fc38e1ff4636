"""Command-line interface.

Subcommands map one-to-one onto the library: estimate / tyler / xi / path
wrap the solvers, verify runs the diagnostic suite, curve runs the
Monte-Carlo experiment, sample generates synthetic datasets.  Exit codes:
0 success, 1 input error, 2 solver non-convergence, 3 experiment failure,
4 verification failure.
"""

import argparse
import json
import math
import os
import sys

from .data import (NotPositiveDefiniteError, check_admissibility,
                   load_dataset_csv)
from .diagnostics import format_report_table, reports_to_json, run_diagnostic_suite
from .families import WeightConditionError, get_family, validate_conditions
from .simulate import (ExperimentError, ExperimentSpec, format_curve_csv,
                       run_curve, sample_gaussian, toeplitz_covariance,
                       write_curve_csv, write_curve_svg)
from .solver import SolverConfig, limit_path, solve_maronna, solve_result_dict, solve_tyler, solve_xi

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_EXPERIMENT = 3
EXIT_VERIFY = 4


class _Parser(argparse.ArgumentParser):
    # Flag errors are input errors: exit 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def parse_t_spec(spec):
    """Parse a t grid: either 'start:step:end' (inclusive) or 'a,b,c'."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad grid spec {spec!r}, expected start:step:end")
        start, step, end = (float(p) for p in parts)
        if step <= 0 or end < start:
            raise ValueError(f"bad grid spec {spec!r}: need step > 0 and end >= start")
        count = int(round((end - start) / step)) + 1
        return [start + i * step for i in range(count)]
    return [float(p) for p in spec.split(",") if p.strip()]


def _solver_config(args):
    return SolverConfig(tol=args.tol, max_iter=args.max_iter)


def _emit(payload, out):
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_estimate(args):
    ds = load_dataset_csv(args.data, normalize=not args.no_normalize)
    if args.t <= 0:
        raise ValueError(f"--t must be positive, got {args.t}")
    family = get_family(args.family, ds.m)
    M, report = solve_maronna(ds, family, args.t, _solver_config(args))
    _emit(solve_result_dict(ds, args.t, M, report), args.out)
    if not report.converged:
        print(f"did not converge after {report.iterations} iterations "
              f"(residual {report.final_residual:.6e})", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_tyler(args):
    ds = load_dataset_csv(args.data, normalize=not args.no_normalize)
    P, report = solve_tyler(ds, _solver_config(args))
    _emit(solve_result_dict(ds, 0.0, P, report), args.out)
    if not report.converged:
        print(f"did not converge after {report.iterations} iterations "
              f"(residual {report.final_residual:.6e})", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_xi(args):
    ds = load_dataset_csv(args.data, normalize=not args.no_normalize)
    family = get_family(args.family, ds.m)
    P, report = solve_tyler(ds, _solver_config(args))
    if not report.converged:
        print("t=0 solve did not converge", file=sys.stderr)
        return EXIT_SOLVER
    xi = solve_xi(ds, family, P)
    _emit({"m": ds.m, "N": ds.n, "family": args.family, "xi": xi,
           "tyler_iterations": report.iterations,
           "tyler_residual": report.final_residual}, args.out)
    return EXIT_OK


def cmd_path(args):
    ds = load_dataset_csv(args.data, normalize=not args.no_normalize)
    family = get_family(args.family, ds.m)
    grid = sorted(set(parse_t_spec(args.t_list)), reverse=True)
    result = limit_path(ds, family, grid, _solver_config(args))
    payload = {
        "m": ds.m,
        "N": ds.n,
        "family": args.family,
        "xi": result.xi,
        "t": [p.t for p in result.points],
        "deviation": [p.deviation for p in result.points],
        "iterations": [p.report.iterations for p in result.points],
        "limit_matrix": [float(x) for x in result.limit.mat.ravel()],
    }
    _emit(payload, args.out)
    bad = [p for p in result.points if not p.report.converged]
    if bad or not result.tyler_report.converged:
        print("one or more solves did not converge", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args):
    ds = load_dataset_csv(args.data, normalize=not args.no_normalize)
    failures = []

    exact_cost = math.comb(ds.n, ds.m)
    verdict = check_admissibility(ds, mode="exact" if exact_cost <= 10**6 else "randomized")
    if not verdict.verified:
        failures.append(f"admissibility: subset {verdict.witness} is rank deficient")

    family = get_family(args.family, ds.m)
    report = validate_conditions(family)
    for check in report.failed():
        failures.append(f"family condition: {check.name} "
                        f"(witnesses {check.witnesses[:2]})")

    if failures:
        for f in failures:
            print(f"FAIL {f}")
        return EXIT_VERIFY

    t_list = parse_t_spec(args.t_list)
    reports = run_diagnostic_suite(ds, family, t_list, cfg=_solver_config(args))
    print(format_report_table(reports))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(reports_to_json(reports) + "\n")
    if not all(r.passed for r in reports):
        for r in reports:
            if not r.passed:
                print(f"FAIL {r.name}: worst_case={r.worst_case:.6g}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_curve(args):
    spec = ExperimentSpec(
        m=args.m, N=args.N, rho=args.rho, family=args.family,
        t_grid=parse_t_spec(args.t_grid), trials=args.trials, seed=args.seed,
        normalize=not args.no_normalize)
    workers = args.threads if args.threads else (os.cpu_count() or 1)
    points = run_curve(spec, cfg=_solver_config(args), n_workers=workers)
    if args.out:
        write_curve_csv(points, args.out)
    else:
        sys.stdout.write(format_curve_csv(points))
    if args.svg:
        write_curve_svg({f"rho={args.rho:g}": points}, args.svg)
    return EXIT_OK


def cmd_sample(args):
    sigma = toeplitz_covariance(args.m, args.rho)
    draws = sample_gaussian(args.n, sigma, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"# gaussian draws: m={args.m} n={args.n} rho={args.rho:.17g} "
                 f"seed={args.seed}\n")
        for row in draws:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return EXIT_OK


def _add_solver_flags(p):
    p.add_argument("--tol", type=float, default=1e-10,
                   help="relative fixed-point residual to stop at")
    p.add_argument("--max-iter", type=int, default=2000, dest="max_iter")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="CSV dataset, one sample per row")
    p.add_argument("--no-normalize", action="store_true", dest="no_normalize",
                   help="keep raw vectors instead of scaling to unit norm")


def build_parser():
    parser = _Parser(prog="mscatter",
                     description="Robust scatter-matrix estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="solve the weighted scatter equation at a tail index t")
    _add_data_flags(p)
    p.add_argument("--family", default="model", help="weight family (model, student-t)")
    p.add_argument("--t", type=float, required=True, help="tail index, > 0")
    _add_solver_flags(p)
    p.add_argument("--out", help="write the JSON result here instead of stdout")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("tyler", help="solve the t=0 (distribution-free) equation")
    _add_data_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tyler)

    p = sub.add_parser("xi", help="limit scale xi relating the t=0 shape to lim M(t)")
    _add_data_flags(p)
    p.add_argument("--family", default="model")
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_xi)

    p = sub.add_parser("path", help="solve M(t) along a decreasing t grid against the limit")
    _add_data_flags(p)
    p.add_argument("--family", default="model")
    p.add_argument("--t-list", required=True, dest="t_list",
                   help="grid spec: start:step:end or comma list")
    _add_solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("verify", help="admissibility, family conditions and diagnostics")
    _add_data_flags(p)
    p.add_argument("--family", default="model")
    p.add_argument("--t-list", default="0.1,1.0", dest="t_list")
    _add_solver_flags(p)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("curve", help="Monte-Carlo convergence curve C(t)")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--family", default="student-t")
    p.add_argument("--t-grid", required=True, dest="t_grid")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-normalize", action="store_true", dest="no_normalize")
    p.add_argument("--threads", type=int, default=0,
                   help="worker processes (default: available parallelism)")
    _add_solver_flags(p)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--svg", help="optional SVG plot path")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("sample", help="generate Gaussian draws with Toeplitz covariance")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except (ValueError, OSError, NotPositiveDefiniteError, WeightConditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
