"""Experiment driver, trace files, the trace verifier, and kernel timings.

Three jobs live here because they share the same output conventions:

* `run_experiment` executes a plan (a cross product of masks, adaptivity
  strategies, and alternation values over a size grid) and collects one
  record per run. Tables are CSV with a JSON metadata sidecar.
* `write_trace` / `load_trace` / `verify_theorem_trace` serialize the
  per-mixing-step snapshots a traced solve records and recheck the
  perturbation bound against them offline.
* `bench_masked_kernels` times row-masked matrix-vector products and QR
  factorizations against their full-matrix versions over a grid of sizes
  and retention fractions.

Tables and traces never contain wall-clock values in deterministic fields;
timing lives in clearly named columns that consumers are free to ignore.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fixed_point import NumericalBreakdown
from .problems import PROBLEM_NAMES, ResourceLimit, build_problem
from .sketching import Adaptivity, eta, perturbation_norm
from .solver import SolveReport, SolverConfig, solve

TRACE_FORMAT = "aap-trace-1"

# Stop repeating a timing cell once the running average moves by less than
# this between consecutive repetitions.
AVERAGE_RTOL = 1e-5
REP_CAP = 10_000

DEFAULT_RETENTIONS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

# Relative mismatch between R^T R and the restricted Gram matrix beyond
# which a trace is considered corrupted rather than merely inaccurate.
FACTOR_RTOL = 1e-8

BOUND_SLACK = 1e-10


class ParseError(ValueError):
    """Malformed plan or trace input; carries a line number when known."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


@dataclass(frozen=True)
class ExperimentPlan:
    """One experiment: a problem, a size grid, and a config matrix."""

    problem: str
    sizes: tuple[int, ...]
    masks: tuple[str, ...] = ("none",)
    adaptivities: tuple[str, ...] = ("none",)
    alternations: tuple[int, ...] = (1,)
    sketch: float = 30.0
    window: int | None = None
    tol: float = 1e-6
    max_iterations: int = 1000
    repetitions: int = 1
    seed: int = 0
    best: bool = False
    workers: int = 1
    out: str | None = None
    traces: str | None = None

    def __post_init__(self):
        if not self.sizes:
            raise ParseError("plan has no sizes")
        if not (self.masks and self.adaptivities and self.alternations):
            raise ParseError("plan config matrix is empty")
        if self.repetitions < 1:
            raise ParseError("repetitions must be at least 1")
        if self.workers < 1:
            raise ParseError("workers must be at least 1")
        if self.best and self.workers > 1:
            raise ParseError(
                "best mode ranks by wall time and needs workers = 1"
            )


@dataclass
class RunRecord:
    """One row of an experiment table."""

    problem: str
    size: int
    mask: str
    adaptivity: str
    sketch: float
    window: int | None
    alternation: int
    tol: float
    seed: int
    iterations: int | None
    converged: bool
    wall_time_seconds: float | None
    best: bool = False


_LIST_KEYS = {"sizes", "masks", "adapt", "alternations"}
_PLAN_KEYS = _LIST_KEYS | {
    "problem",
    "sketch",
    "window",
    "tol",
    "max_iterations",
    "repetitions",
    "seed",
    "best",
    "workers",
    "out",
    "traces",
}


def parse_plan(text: str) -> ExperimentPlan:
    """Parse a plain key = value plan file.

    Lists are comma separated, `#` starts a comment, and unknown keys are
    rejected with their line number.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _PLAN_KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _parse_plan_value(key, val)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
    if "problem" not in values:
        raise ParseError("plan is missing 'problem'")
    if "sizes" not in values:
        raise ParseError("plan is missing 'sizes'")
    if "traces" not in values and values.get("out") is not None:
        # A table-writing sweep keeps per-run traces next to the table
        # unless the plan says traces = none.
        values["traces"] = values["out"] + ".traces"
    kwargs = {
        "problem": values["problem"],
        "sizes": values["sizes"],
    }
    rename = {"adapt": "adaptivities"}
    for key, val in values.items():
        if key in ("problem", "sizes"):
            continue
        kwargs[rename.get(key, key)] = val
    return ExperimentPlan(**kwargs)


def _parse_plan_value(key, val):
    if key in ("sizes", "alternations"):
        return tuple(int(v) for v in val.split(","))
    if key in ("masks", "adapt"):
        items = tuple(v.strip() for v in val.split(","))
        if key == "adapt":
            items = tuple(canonical_adaptivity(v) for v in items)
        return items
    if key in ("sketch", "tol"):
        return float(val)
    if key in ("max_iterations", "repetitions", "seed", "workers"):
        return int(val)
    if key == "window":
        return None if val in ("", "none") else int(val)
    if key == "best":
        if val not in ("true", "false"):
            raise ValueError(f"best must be true or false, got {val!r}")
        return val == "true"
    if key in ("out", "traces"):
        return None if val in ("", "none") else val
    return val


_ADAPT_ALIASES = {
    "none": "none",
    "sub-pow": "subselect-power",
    "sub-const": "subselect-constant",
    "rand-pow": "randomized-power",
    "rand-const": "randomized-constant",
}


def canonical_adaptivity(name: str) -> str:
    """Map a CLI alias (sub-pow, rand-const, ...) to the full strategy name."""
    name = name.strip()
    if name in _ADAPT_ALIASES:
        return _ADAPT_ALIASES[name]
    return Adaptivity(name).value


def _plan_config(plan: ExperimentPlan, mask: str, adapt: str, p: int) -> SolverConfig:
    return SolverConfig(
        window=plan.window,
        alternation=p,
        rel_tolerance=plan.tol,
        max_iterations=plan.max_iterations,
        static_mask=None if mask == "none" else mask,
        adaptivity=adapt,
        sketch_percent=plan.sketch,
        rng_seed=plan.seed,
    )


def _run_one(plan: ExperimentPlan, size: int, mask: str, adapt: str, p: int,
             timed: bool):
    """Execute one cell of the plan matrix; failures become failed rows."""
    record = RunRecord(
        problem=plan.problem,
        size=size,
        mask=mask,
        adaptivity=adapt,
        sketch=plan.sketch,
        window=plan.window,
        alternation=p,
        tol=plan.tol,
        seed=plan.seed,
        iterations=None,
        converged=False,
        wall_time_seconds=None,
    )
    trace_report = None
    try:
        problem = build_problem(plan.problem, size, seed=plan.seed)
        config = _plan_config(plan, mask, adapt, p)
        want_trace = plan.traces is not None
        best_wall = None
        report = None
        for _ in range(plan.repetitions):
            t0 = time.perf_counter()
            report = solve(problem, config, capture_trace=want_trace)
            wall = time.perf_counter() - t0
            best_wall = wall if best_wall is None else min(best_wall, wall)
        record.iterations = report.iterations
        record.converged = report.converged
        record.window = report.window
        if timed:
            record.wall_time_seconds = best_wall
        trace_report = report if want_trace else None
    except NumericalBreakdown as exc:
        partial = getattr(exc, "report", None)
        if partial is not None:
            record.iterations = partial.iterations
            record.window = partial.window
    except (ResourceLimit, KeyError, ValueError):
        pass
    return record, trace_report


def run_experiment(plan: ExperimentPlan) -> list[RunRecord]:
    """Run every (size, mask, adaptivity, alternation) cell of the plan.

    Rows come back in plan order, one per cell, with failures recorded as
    non-converged rows. With workers > 1 the cells run concurrently and the
    wall-time column stays empty; timing requires the sequential mode.
    When the plan names a traces directory, each successful run's trace is
    written there.
    """
    cells = [
        (size, mask, adapt, p)
        for size in plan.sizes
        for mask in plan.masks
        for adapt in plan.adaptivities
        for p in plan.alternations
    ]
    timed = plan.workers == 1
    results = []
    if plan.workers == 1:
        for cell in cells:
            results.append(_run_one(plan, *cell, timed=timed))
    else:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            futures = [
                pool.submit(_run_one, plan, *cell, timed=timed)
                for cell in cells
            ]
            results = [f.result() for f in futures]

    records = [rec for rec, _ in results]
    if plan.traces is not None:
        os.makedirs(plan.traces, exist_ok=True)
        for (size, mask, adapt, p), (rec, report) in zip(cells, results):
            if report is None:
                continue
            name = f"{plan.problem}-{size}-{mask}-{adapt}-p{p}.json"
            write_trace(report, os.path.join(plan.traces, name))

    if plan.best:
        by_size: dict[int, RunRecord] = {}
        for rec in records:
            if not rec.converged or rec.wall_time_seconds is None:
                continue
            cur = by_size.get(rec.size)
            if cur is None or rec.wall_time_seconds < cur.wall_time_seconds:
                by_size[rec.size] = rec
        for rec in by_size.values():
            rec.best = True
    return records


_TABLE_COLUMNS = (
    "problem",
    "size",
    "mask",
    "adaptivity",
    "sketch",
    "window",
    "alternation",
    "tol",
    "seed",
    "iterations",
    "converged",
    "wall_time_seconds",
    "best",
)


def format_table(records: list[RunRecord]) -> str:
    """CSV text for records, header included.

    Floats are written with repr so that `load_table` reproduces the
    in-memory records exactly.
    """
    lines = [",".join(_TABLE_COLUMNS)]
    for rec in records:
        row = [
            rec.problem,
            str(rec.size),
            rec.mask,
            rec.adaptivity,
            repr(rec.sketch),
            "" if rec.window is None else str(rec.window),
            str(rec.alternation),
            repr(rec.tol),
            str(rec.seed),
            "" if rec.iterations is None else str(rec.iterations),
            "true" if rec.converged else "false",
            "" if rec.wall_time_seconds is None else repr(rec.wall_time_seconds),
            "1" if rec.best else "",
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_table(records: list[RunRecord], path: str, meta: dict | None = None):
    """Write records as CSV plus a `.meta.json` sidecar."""
    with open(path, "w") as fh:
        fh.write(format_table(records))
    sidecar = dict(meta or {})
    sidecar.setdefault("columns", list(_TABLE_COLUMNS))
    sidecar.setdefault("rows", len(records))
    with open(path + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_table(path: str) -> list[RunRecord]:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or lines[0] != ",".join(_TABLE_COLUMNS):
        raise ParseError("unrecognized table header", lineno=1)
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(_TABLE_COLUMNS):
            raise ParseError(
                f"expected {len(_TABLE_COLUMNS)} columns, got {len(parts)}",
                lineno,
            )
        (prob, size, mask, adapt, sketch, window, p, tol, seed, iters,
         conv, wall, best) = parts
        records.append(
            RunRecord(
                problem=prob,
                size=int(size),
                mask=mask,
                adaptivity=adapt,
                sketch=float(sketch),
                window=None if window == "" else int(window),
                alternation=int(p),
                tol=float(tol),
                seed=int(seed),
                iterations=None if iters == "" else int(iters),
                converged=conv == "true",
                wall_time_seconds=None if wall == "" else float(wall),
                best=best == "1",
            )
        )
    return records


def write_trace(report: SolveReport, path: str):
    """Serialize a traced solve to JSON.

    Requires the solve to have run with capture_trace=True; the file holds
    the full restricted increment windows per mixing step, so it grows with
    l1 * m * (number of mixing steps). No timing fields are written.
    """
    if report.trace is None:
        raise ValueError("report has no trace; solve with capture_trace=True")
    config = report.config
    steps = []
    for st in report.trace:
        steps.append(
            {
                "iteration": st.iteration,
                "columns": st.columns,
                "increments": st.window_increments.tolist(),
                "dx_norms": st.dx_norms.tolist(),
                "f_restricted": st.f_restricted.tolist(),
                "alpha": None if st.alpha is None else st.alpha.tolist(),
                "r_factor": None if st.r_factor is None else st.r_factor.tolist(),
                "mask": None if st.mask is None else st.mask.tolist(),
                "lipschitz": st.lipschitz,
                "sigma_min": st.sigma_min,
                "eps_lhs": st.eps_lhs,
                "eps_rhs": st.eps_rhs,
                "etas": None if st.etas is None else list(st.etas),
                "accepted": st.accepted,
                "fallback": st.fallback,
            }
        )
    doc = {
        "format": TRACE_FORMAT,
        "problem": report.problem,
        "n": report.n,
        "l1": report.l1,
        "omega": report.omega,
        "window": report.window,
        "alternation": report.alternation,
        "adaptivity": config.adaptivity.value,
        "static_mask": config.static_mask or "none",
        "sketch_percent": config.sketch_percent,
        "eta_exponent": config.eta_exponent,
        "seed": config.rng_seed,
        "rel_tolerance": config.rel_tolerance,
        "converged": report.converged,
        "iterations": report.iterations,
        "residual_history": report.residual_history,
        "steps": steps,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


_TRACE_REQUIRED = (
    "format",
    "problem",
    "l1",
    "eta_exponent",
    "adaptivity",
    "steps",
)


def load_trace(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, lineno=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ParseError("trace is not a JSON object", lineno=1)
    for key in _TRACE_REQUIRED:
        if key not in doc:
            raise ParseError(f"trace is missing {key!r}", lineno=1)
    if doc["format"] != TRACE_FORMAT:
        raise ParseError(f"unknown trace format {doc['format']!r}", lineno=1)
    return doc


@dataclass
class StepCheck:
    """Verification outcome for one mixing step."""

    iteration: int
    columns: int
    masked: bool
    fallback: bool
    hypotheses_satisfied: bool
    delta: float
    bound: float
    bound_satisfied: bool


@dataclass
class TraceVerification:
    steps: list[StepCheck] = field(default_factory=list)
    passed: bool = True

    @property
    def violations(self) -> list[StepCheck]:
        return [
            s for s in self.steps
            if s.hypotheses_satisfied and not s.bound_satisfied
        ]


def verify_theorem_trace(path_or_doc) -> TraceVerification:
    """Recheck the perturbation bound of every mixing step in a trace.

    For each step the stored triangular factor is checked against the
    restricted increments (mismatch means a corrupted trace), the two
    stability hypotheses are recomputed from scratch (true smallest singular
    value from an SVD of the factor, recorded Lipschitz estimate, recorded
    increment norms), and the perturbation norm is compared against the
    eta-sum bound. The report fails only where the hypotheses verify and
    the bound still does not hold.
    """
    doc = path_or_doc if isinstance(path_or_doc, dict) else load_trace(path_or_doc)
    l1 = int(doc["l1"])
    eta_exponent = float(doc["eta_exponent"])
    try:
        eta_kind = Adaptivity(doc["adaptivity"]).eta_kind
    except ValueError as exc:
        raise ParseError(f"unknown adaptivity {doc['adaptivity']!r}") from exc

    result = TraceVerification()
    for idx, st in enumerate(doc["steps"]):
        try:
            check = _verify_step(st, l1, eta_kind, eta_exponent)
        except ParseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"step {idx}: malformed record ({exc})") from exc
        result.steps.append(check)
        if check.hypotheses_satisfied and not check.bound_satisfied:
            result.passed = False
    return result


def _verify_step(st: dict, l1: int, eta_kind: str | None, exponent: float):
    c = int(st["columns"])
    increments = np.asarray(st["increments"], dtype=float)
    if increments.shape != (l1, c):
        raise ParseError(
            f"step {st['iteration']}: increments have shape "
            f"{increments.shape}, expected ({l1}, {c})"
        )
    mask = st["mask"]
    fallback = bool(st["fallback"])
    alpha = st["alpha"]
    if fallback or alpha is None:
        return StepCheck(
            iteration=int(st["iteration"]),
            columns=c,
            masked=mask is not None,
            fallback=True,
            hypotheses_satisfied=False,
            delta=0.0,
            bound=0.0,
            bound_satisfied=True,
        )
    alpha = np.asarray(alpha, dtype=float)
    r_factor = np.asarray(st["r_factor"], dtype=float)

    rows = np.arange(l1) if mask is None else np.asarray(mask, dtype=int)
    restricted = increments[rows]
    gram = restricted.T @ restricted
    gram_r = r_factor.T @ r_factor
    scale = max(float(np.linalg.norm(gram)), 1e-300)
    if float(np.linalg.norm(gram - gram_r)) > FACTOR_RTOL * scale:
        raise ParseError(
            f"step {st['iteration']}: stored triangular factor disagrees "
            "with the recorded increments"
        )

    if mask is None:
        return StepCheck(
            iteration=int(st["iteration"]),
            columns=c,
            masked=False,
            fallback=False,
            hypotheses_satisfied=False,
            delta=0.0,
            bound=0.0,
            bound_satisfied=True,
        )

    masked_cols = np.zeros_like(increments)
    masked_cols[rows] = increments[rows]
    delta = perturbation_norm(increments, masked_cols, alpha)

    f_res = np.asarray(st["f_restricted"], dtype=float)
    norm_f = float(np.linalg.norm(f_res))
    kept_norm_sq = float(f_res[rows] @ f_res[rows])
    dropped = max(norm_f * norm_f - kept_norm_sq, 0.0)
    eps = np.sqrt(dropped) / norm_f if norm_f > 0 else 0.0

    sigma_true = float(np.linalg.svd(r_factor, compute_uv=False)[-1])
    lipschitz = float(st["lipschitz"])
    dx_norms = np.asarray(st["dx_norms"], dtype=float)
    etas = [eta(j, eta_kind, exponent) for j in range(1, c + 1)]
    hyp_ok = lipschitz > 0 and norm_f > 0
    if hyp_ok:
        for j in range(c):
            if dx_norms[j] <= 0:
                continue
            need = lipschitz * norm_f * dx_norms[j] * (1.0 + eps)
            if etas[j] * sigma_true < need:
                hyp_ok = False
                break
    bound = float(sum(etas)) + BOUND_SLACK
    return StepCheck(
        iteration=int(st["iteration"]),
        columns=c,
        masked=True,
        fallback=False,
        hypotheses_satisfied=hyp_ok,
        delta=delta,
        bound=bound,
        bound_satisfied=delta <= bound,
    )


@dataclass
class BenchRecord:
    """One timing cell of the masked-kernel benchmark."""

    n: int
    columns: int
    retention: float
    op: str
    masked_seconds: float
    full_seconds: float
    reps: int


def _time_until_stable(fn, rep_cap: int) -> tuple[float, int]:
    """Average fn's wall time until the running mean settles."""
    total = 0.0
    mean = 0.0
    for rep in range(1, rep_cap + 1):
        t0 = time.perf_counter()
        fn()
        total += time.perf_counter() - t0
        new_mean = total / rep
        if rep >= 3 and abs(new_mean - mean) <= AVERAGE_RTOL * mean:
            return new_mean, rep
        mean = new_mean
    return mean, rep_cap


def bench_masked_kernels(
    n_values,
    columns: int = 50,
    retentions=DEFAULT_RETENTIONS,
    rep_cap: int = REP_CAP,
    seed: int = 0,
    pin: bool = True,
) -> tuple[list[BenchRecord], list[dict]]:
    """Time masked vs full matvec and QR over sizes and retentions.

    Returns the complete record grid (one record per (n, retention, op))
    and a per-(n, op) summary holding the largest retention at which the
    masked kernel beat the full one, or None if none did. The run pins to
    one hardware thread where the platform allows it.
    """
    n_values = list(n_values)
    if n_values != sorted(n_values):
        raise ValueError("n_values must be ascending")
    saved_affinity = None
    if pin and hasattr(os, "sched_setaffinity"):
        saved_affinity = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(saved_affinity)})
    try:
        records = []
        for n in n_values:
            rng = np.random.default_rng(seed + n)
            a = rng.standard_normal((n, columns))
            v = rng.standard_normal(n)
            for retention in retentions:
                if not 0.0 < retention <= 1.0:
                    raise ValueError(f"retention {retention} outside (0, 1]")
                kept = max(1, round(retention * n))
                if kept == n:
                    # A full mask is the identity; routing it through a
                    # gather would time the copy, not the mask.
                    masked_matvec = lambda: a.T @ v
                    masked_qr = lambda: np.linalg.qr(a, mode="reduced")
                else:
                    idx = np.sort(rng.choice(n, size=kept, replace=False))
                    # The gather is part of the masked kernel's cost.
                    masked_matvec = lambda: a[idx].T @ v[idx]
                    masked_qr = lambda: np.linalg.qr(a[idx], mode="reduced")
                cells = {
                    "matvec": (lambda: a.T @ v, masked_matvec),
                    "qr": (
                        lambda: np.linalg.qr(a, mode="reduced"),
                        masked_qr,
                    ),
                }
                for op, (full_fn, masked_fn) in cells.items():
                    full_t, reps_f = _time_until_stable(full_fn, rep_cap)
                    masked_t, reps_m = _time_until_stable(masked_fn, rep_cap)
                    records.append(
                        BenchRecord(
                            n=n,
                            columns=columns,
                            retention=retention,
                            op=op,
                            masked_seconds=masked_t,
                            full_seconds=full_t,
                            reps=max(reps_f, reps_m),
                        )
                    )
    finally:
        if saved_affinity is not None:
            os.sched_setaffinity(0, saved_affinity)

    summary = []
    for n in n_values:
        for op in ("matvec", "qr"):
            wins = [
                r.retention
                for r in records
                if r.n == n and r.op == op and r.masked_seconds < r.full_seconds
            ]
            summary.append(
                {"n": n, "op": op, "max_winning_retention": max(wins, default=None)}
            )
    return records, summary


_BENCH_COLUMNS = (
    "n",
    "columns",
    "retention",
    "op",
    "masked_seconds",
    "full_seconds",
    "reps",
)


def write_bench_table(records: list[BenchRecord], path: str,
                      meta: dict | None = None):
    lines = [",".join(_BENCH_COLUMNS)]
    for rec in records:
        lines.append(
            ",".join(
                [
                    str(rec.n),
                    str(rec.columns),
                    repr(rec.retention),
                    rec.op,
                    repr(rec.masked_seconds),
                    repr(rec.full_seconds),
                    str(rec.reps),
                ]
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = dict(meta or {})
    sidecar.setdefault("columns", list(_BENCH_COLUMNS))
    sidecar.setdefault("rows", len(records))
    with open(path + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bench_table(path: str) -> list[BenchRecord]:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or lines[0] != ",".join(_BENCH_COLUMNS):
        raise ParseError("unrecognized benchmark table header", lineno=1)
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(_BENCH_COLUMNS):
            raise ParseError(
                f"expected {len(_BENCH_COLUMNS)} columns, got {len(parts)}",
                lineno,
            )
        records.append(
            BenchRecord(
                n=int(parts[0]),
                columns=int(parts[1]),
                retention=float(parts[2]),
                op=parts[3],
                masked_seconds=float(parts[4]),
                full_seconds=float(parts[5]),
                reps=int(parts[6]),
            )
        )
    return records


def build_meta(extra: dict | None = None) -> dict:
    """Common sidecar metadata: versions and the package name."""
    from . import __version__

    meta = {
        "package": "aap",
        "version": __version__,
        "numpy": np.__version__,
    }
    if extra:
        meta.update(extra)
    return meta
