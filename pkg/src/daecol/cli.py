"""Command-line front end: ``daecol solve|study|compare|selftest``.

Exit codes: 0 on success, 1 on invalid input, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import analysis, selftest
from .collocation import SchemeError, make_scheme, solve, space_for
from .meshspace import uniform_partition
from .numkit import RankDeficientError
from .problems import get_problem, problem_names

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ValidationError(Exception):
    pass


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", default="index3",
                        help=f"problem id, optionally with parameters (name?key=val); one of {', '.join(problem_names())}")
    common.add_argument("--eta", type=float, default=None, help="eta parameter of the index3 problem (default -2)")
    common.add_argument("--N", type=int, default=3, help="polynomial degree of the differentiated components")
    common.add_argument("--M", type=int, default=None, help="collocation points per subinterval (default N+1)")
    common.add_argument("--nodes", choices=["uniform", "gauss"], default="gauss")
    common.add_argument("--method", choices=["lsq", "standard", "continuous"], default="lsq")
    common.add_argument("--weighting", choices=["gram", "diagonal"], default="gram")
    common.add_argument("--quad-order", type=int, default=None,
                        help="Gauss order for the continuous method")
    common.add_argument("--solver", choices=["auto", "dense", "structured"], default="auto")
    common.add_argument("--format", choices=["csv", "md"], default="md")
    common.add_argument("--out", default=None, help="output file (default stdout)")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--n0", type=int, default=10, help="coarsest number of subintervals")
    grid.add_argument("--doublings", type=int, default=3, help="number of mesh doublings")
    grid.add_argument("--no-timings", action="store_true", help="leave timing columns empty")

    parser = argparse.ArgumentParser(prog="daecol", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", parents=[common], allow_abbrev=False,
                             help="solve one instance and print errors and diagnostics")
    p_solve.add_argument("--n", type=int, default=10, help="number of subintervals")
    sub.add_parser("study", parents=[common, grid], allow_abbrev=False,
                   help="convergence study under mesh doubling")
    sub.add_parser("compare", parents=[common, grid], allow_abbrev=False,
                   help="standard collocation (M=N) next to least squares on the same grid")
    p_self = sub.add_parser("selftest", allow_abbrev=False, help="run the property suite")
    p_self.add_argument("--check", action="append", default=None,
                        help="run only the named check (repeatable)")
    return parser


def _problem(args):
    overrides = {}
    if args.eta is not None:
        if not args.problem.split("?")[0].startswith("index3"):
            raise ValidationError("--eta only applies to the index3 problem")
        overrides["eta"] = args.eta
    try:
        return get_problem(args.problem, **overrides)
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"unknown or malformed problem {args.problem!r}: {exc}") from exc


def _scheme(args, method=None, M=None):
    try:
        return make_scheme(args.N, args.M if M is None else M, nodes=args.nodes,
                           method=method or args.method, weighting=args.weighting,
                           quad_order=args.quad_order if (method or args.method) == "continuous" else None)
    except (SchemeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc


def _n_list(args):
    if args.n0 < 1 or args.doublings < 0:
        raise ValidationError("need --n0 >= 1 and --doublings >= 0")
    return analysis.doubling(args.n0, args.doublings)


def _open_out(path):
    if path is None:
        return None
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def _emit(text, handle):
    if handle is None:
        sys.stdout.write(text)
    else:
        handle.write(text)
        handle.close()


def _solve_text(problem, scheme, n, rep, err):
    lines = [f"problem: {problem.label}",
             f"scheme: {scheme.method.value}, N={scheme.N}, M={scheme.M}, "
             f"{scheme.nodes.family.value} nodes, {scheme.weighting.value} weighting",
             f"n: {n}", "",
             "| component | max error | L2 error | H1 error |", "|---:|---:|---:|---:|"]
    dc = list(problem.diff_components)
    for c in range(problem.m):
        h1 = f"{err.h1_err[dc.index(c)]:.3e}" if c in dc else ""
        lines.append(f"| {c + 1} | {err.max_err[c]:.3e} | {err.l2_err[c]:.3e} | {h1} |")
    lines += ["", f"combined error: {err.combined:.6e}",
              f"residual norm: {rep.residual_norm:.3e}",
              f"system shape: {rep.shape[0]} x {rep.shape[1]} ({rep.path} solver)"]
    if rep.sigma_min is not None:
        lines.append(f"sigma_min: {rep.sigma_min:.3e}, sigma_max: {rep.sigma_max:.3e}, "
                     f"condition: {rep.condition:.3e}")
    lines.append(f"assembly: {rep.assembly_time:.3f} s, solve: {rep.solve_time:.3f} s")
    lines += [f"note: {note}" for note in rep.notes]
    return "\n".join(lines) + "\n"


def _cmd_solve(args):
    problem = _problem(args)
    scheme = _scheme(args)
    if args.n < 1:
        raise ValidationError("--n must be >= 1")
    out = _open_out(args.out)
    space = space_for(problem, uniform_partition(problem.a, problem.b, args.n), scheme.N)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = solve(problem, space, scheme, solver=args.solver)
    err = analysis.problem_errors(rep.solution, problem)
    if args.format == "csv":
        result = analysis.StudyResult(problem.label, scheme.method.value, scheme.N, scheme.M,
                                      scheme.nodes.family.value, scheme.weighting.value,
                                      problem.m, problem.diff_components)
        result.rows.append(analysis.StudyRow(n=args.n, errors=err, sigma_min=rep.sigma_min,
                                             sigma_max=rep.sigma_max, assembly_s=rep.assembly_time,
                                             solve_s=rep.solve_time, notes=list(rep.notes)))
        text = analysis.write_report(result, "csv")
    else:
        text = _solve_text(problem, scheme, args.n, rep, err)
    _emit(text, out)
    return EXIT_OK


def _rank_failures(result):
    return [row for row in result.rows if row.failure and row.failure.startswith(RankDeficientError.__name__)]


def _report_failures(result):
    for row in result.rows:
        if row.failure:
            print(f"n={row.n}: {row.failure}", file=sys.stderr)


def _cmd_study(args):
    problem = _problem(args)
    scheme = _scheme(args)
    n_list = _n_list(args)
    out = _open_out(args.out)
    result = analysis.run_study(problem, scheme, n_list, solver=args.solver)
    _emit(analysis.write_report(result, args.format, timings=not args.no_timings), out)
    _report_failures(result)
    return EXIT_NUMERICAL if _rank_failures(result) else EXIT_OK


def _cmd_compare(args):
    problem = _problem(args)
    if args.method == "standard":
        raise ValidationError("compare always pairs standard collocation with --method lsq or continuous")
    standard = _scheme(args, method="standard", M=args.N)
    other = _scheme(args)
    n_list = _n_list(args)
    out = _open_out(args.out)
    results = {
        "standard": analysis.run_study(problem, standard, n_list, solver=args.solver),
        other.method.value: analysis.run_study(problem, other, n_list, solver=args.solver),
    }
    if args.format == "md":
        head = (f"**{problem.label}: standard collocation (M={standard.M}) vs. "
                f"{other.method.value} (M={other.M}), N={args.N}, {args.nodes} nodes, "
                "componentwise maximal errors**\n\n")
        text = head + analysis.write_comparison(results, "md")
    else:
        text = analysis.write_comparison(results, "csv", timings=not args.no_timings)
    _emit(text, out)
    for res in results.values():
        _report_failures(res)
    return EXIT_NUMERICAL if _rank_failures(results[other.method.value]) else EXIT_OK


def _cmd_selftest(args):
    names = args.check
    if names:
        unknown = sorted(set(names) - set(selftest.check_names()))
        if unknown:
            raise ValidationError(f"unknown check(s): {', '.join(unknown)}")
    results = selftest.run_all(names)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_NUMERICAL if failed else EXIT_OK


COMMANDS = {"solve": _cmd_solve, "study": _cmd_study, "compare": _cmd_compare, "selftest": _cmd_selftest}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
