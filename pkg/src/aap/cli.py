"""Command line front end.

Subcommands:

* `aap run` solves one problem instance and optionally writes a one-row
  result table and a step trace.
* `aap sweep` executes a plan file (a cross product of configurations)
  and writes or prints the result table.
* `aap bench-kernels` times masked against full kernels over a grid of
  sizes and retention fractions.
* `aap verify-trace` rechecks the stability bound recorded in a trace.

Exit codes: 0 on success, 1 when a single run fails to converge, 2 for
invalid input of any kind, 3 when trace verification finds a violation.
"""
from __future__ import annotations

import argparse
import sys

from .bench import (
    ParseError,
    RunRecord,
    bench_masked_kernels,
    build_meta,
    canonical_adaptivity,
    format_table,
    load_trace,
    parse_plan,
    run_experiment,
    verify_theorem_trace,
    write_bench_table,
    write_table,
    write_trace,
)
from .fixed_point import NumericalBreakdown, field_indices
from .problems import PROBLEM_NAMES, ResourceLimit, build_problem
from .solver import SolverConfig, solve

ADAPT_CHOICES = ("none", "sub-pow", "sub-const", "rand-pow", "rand-const")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aap",
        description="Anderson-Picard fixed-point solver with masked mixing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one problem instance")
    run.add_argument("--problem", required=True, choices=PROBLEM_NAMES)
    run.add_argument("--size", required=True, type=int,
                     help="system dimension (linear) or grid points per side")
    run.add_argument("--mask", default="none",
                     help="static field mask name, or 'none'")
    run.add_argument("--adapt", default="none", choices=ADAPT_CHOICES)
    run.add_argument("--sketch", type=float, default=30.0,
                     help="percent of restricted rows the sketch keeps")
    run.add_argument("-m", "--window", type=int, default=None,
                     help="mixing window size (default: per-problem)")
    run.add_argument("-p", "--alternation", type=int, default=1,
                     help="mix every p-th iteration")
    run.add_argument("--tol", type=float, default=1e-6)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--max-iterations", type=int, default=1000)
    run.add_argument("--omega", type=float, default=None,
                     help="relaxation (default: per-problem)")
    run.add_argument("--init", default="zero", choices=("zero", "poisson"),
                     help="initial guess (poisson applies to plaplace only)")
    run.add_argument("--trace", default=None, metavar="PATH",
                     help="write a step trace JSON here")
    run.add_argument("--out", default=None, metavar="PATH",
                     help="write a one-row result table here")

    sweep = sub.add_parser("sweep", help="run a plan file")
    sweep.add_argument("--plan", required=True, metavar="FILE")

    bench = sub.add_parser("bench-kernels",
                           help="time masked vs full matvec and QR")
    bench.add_argument("--min-n", type=int, default=1024)
    bench.add_argument("--max-n", type=int, default=262144)
    bench.add_argument("--cols", type=int, default=50)
    bench.add_argument("--reps", type=int, default=10_000,
                       help="repetition cap per timing cell")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True, metavar="PATH")

    verify = sub.add_parser("verify-trace",
                            help="recheck the stability bound in a trace")
    verify.add_argument("path", metavar="TRACE")
    return parser


def _cmd_run(args) -> int:
    try:
        problem = build_problem(args.problem, args.size, seed=args.seed,
                                init=args.init)
        if args.mask != "none":
            field_indices(problem, args.mask)
        config = SolverConfig(
            window=args.window,
            alternation=args.alternation,
            relaxation=args.omega,
            rel_tolerance=args.tol,
            max_iterations=args.max_iterations,
            static_mask=None if args.mask == "none" else args.mask,
            adaptivity=canonical_adaptivity(args.adapt),
            sketch_percent=args.sketch,
            rng_seed=args.seed,
        )
    except (KeyError, ValueError, ResourceLimit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    want_trace = args.trace is not None
    try:
        report = solve(problem, config, capture_trace=want_trace)
    except NumericalBreakdown as exc:
        print(f"breakdown: {exc}", file=sys.stderr)
        return 1

    fallbacks = sum(1 for rec in report.mask_trace if rec.fallback)
    accepted = sum(1 for rec in report.mask_trace if rec.accepted)
    print(f"problem      {report.problem} (n={report.n}, l1={report.l1})")
    print(f"window       m={report.window}  p={report.alternation}  "
          f"omega={report.omega:g}")
    print(f"iterations   {report.iterations}")
    print(f"converged    {'yes' if report.converged else 'no'}")
    print(f"residual     {report.residual_history[-1]:.3e}")
    print(f"mixing       {len(report.mask_trace)} steps, "
          f"{accepted} sketched, {fallbacks} fallbacks")
    print(f"wall time    {report.wall_time_seconds:.3f} s")

    if args.out is not None:
        record = RunRecord(
            problem=args.problem,
            size=args.size,
            mask=args.mask,
            adaptivity=canonical_adaptivity(args.adapt),
            sketch=args.sketch,
            window=report.window,
            alternation=args.alternation,
            tol=args.tol,
            seed=args.seed,
            iterations=report.iterations,
            converged=report.converged,
            wall_time_seconds=report.wall_time_seconds,
        )
        write_table([record], args.out, meta=build_meta({"seed": args.seed}))
    if want_trace:
        write_trace(report, args.trace)
    return 0 if report.converged else 1


def _cmd_sweep(args) -> int:
    try:
        with open(args.plan) as fh:
            plan = parse_plan(fh.read())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"error: {args.plan}: {exc}", file=sys.stderr)
        return 2

    records = run_experiment(plan)
    meta = build_meta({"plan": args.plan, "seed": plan.seed,
                       "repetitions": plan.repetitions,
                       "workers": plan.workers})
    if plan.out is not None:
        write_table(records, plan.out, meta=meta)
        converged = sum(1 for r in records if r.converged)
        print(f"{len(records)} rows ({converged} converged) -> {plan.out}")
    else:
        sys.stdout.write(format_table(records))
    return 0


def _cmd_bench(args) -> int:
    if args.min_n < 2 or args.max_n < args.min_n:
        print("error: need 2 <= min-n <= max-n", file=sys.stderr)
        return 2
    if args.cols < 1 or args.reps < 1:
        print("error: cols and reps must be positive", file=sys.stderr)
        return 2
    n_values = []
    n = 1
    while n < args.min_n:
        n *= 2
    while n <= args.max_n:
        n_values.append(n)
        n *= 2
    if not n_values:
        print("error: no power of two lies in [min-n, max-n]", file=sys.stderr)
        return 2

    records, summary = bench_masked_kernels(
        n_values, columns=args.cols, rep_cap=args.reps, seed=args.seed
    )
    meta = build_meta({"seed": args.seed, "rep_cap": args.reps,
                       "n_values": n_values})
    write_bench_table(records, args.out, meta=meta)

    summary_path = args.out + ".summary.csv"
    lines = ["n,op,max_winning_retention"]
    for row in summary:
        win = row["max_winning_retention"]
        lines.append(f"{row['n']},{row['op']},"
                     f"{'' if win is None else repr(win)}")
    with open(summary_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    print(f"{len(records)} records -> {args.out}")
    print(f"thresholds -> {summary_path}")
    for row in summary:
        win = row["max_winning_retention"]
        label = "never faster" if win is None else f"faster up to {win:g}"
        print(f"  n={row['n']:>8}  {row['op']:<6}  masked {label}")
    largest = max(n_values)
    low = [r for r in records
           if r.n == largest and r.op == "matvec" and r.retention == 0.05]
    if low:
        ratio = low[0].masked_seconds / low[0].full_seconds
        print(f"info: matvec at 5% retention, n={largest}: "
              f"masked/full = {ratio:.3f}")
    return 0


def _cmd_verify(args) -> int:
    try:
        doc = load_trace(args.path)
        result = verify_theorem_trace(doc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"error: {args.path}: {exc}", file=sys.stderr)
        return 2

    masked = [s for s in result.steps if s.masked and not s.fallback]
    checked = [s for s in masked if s.hypotheses_satisfied]
    print(f"steps        {len(result.steps)} "
          f"({len(masked)} masked, {len(checked)} hypothesis-checked)")
    for step in result.violations:
        print(f"violation    iteration {step.iteration}: "
              f"delta {step.delta:.6e} > bound {step.bound:.6e}")
    if not result.passed:
        print("verdict      FAIL")
        return 3
    print("verdict      ok")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "bench-kernels": _cmd_bench,
        "verify-trace": _cmd_verify,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
