"""Command-line interface: ``carbon-clear <command> ...``.

Exit status is 0 on success, 1 on a domain error (bad case, infeasible
market, failed verification) and 2 on a usage error. Domain errors also
write one JSON object to standard error, e.g.
``{"error": "Infeasible", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .allocation import allocate_greedy, allocate_lp, allocation_cost, emissions_of
from .caseio import dump_case, parse_case, parse_case_csv, write_case_csv
from .clearing import SolveOptions, solve_clearing, solve_standard, solve_with_tax
from .equilibrium import verify_equilibrium
from .errors import CarbonClearError, SchemaError
from .model import SystemCase, random_case
from .properties import equivalence_standard, equivalence_tax
from .reports import SolveRecord, emit_report, load_solution
from .sweep import SweepSpec, run_sweep

DEFAULT_TOL = 1e-6
TOL_ENV = "CARBON_CLEAR_TOL"


class UsageError(Exception):
    pass


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
    if not step > 0 or start > stop:
        raise argparse.ArgumentTypeError("need step > 0 and start <= stop")
    return start, stop, step


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carbon-clear", description="Carbon-aware electricity market clearing.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add_tol(p):
        p.add_argument("--tol", type=_positive_float, help=f"relative tolerance (default ${TOL_ENV} or {DEFAULT_TOL})")

    p = sub.add_parser("solve", help="clear the market for a case")
    p.add_argument("case", help="JSON case file or CSV directory")
    add_tol(p)
    p.add_argument("--out", help="write the report here instead of standard output")
    p.add_argument("--format", choices=("csv", "structured"), default="csv")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--standard", action="store_true", help="carbon-agnostic clearing")
    group.add_argument("--tax", type=_non_negative_float, help="carbon-agnostic clearing with a generator carbon tax")

    p = sub.add_parser("sweep", help="sweep one consumer's carbon cost")
    p.add_argument("case")
    p.add_argument("--consumer", required=True)
    p.add_argument("--carbon-cost", required=True, type=_range, metavar="START:STOP:STEP")
    add_tol(p)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "structured"), default="csv")

    p = sub.add_parser("verify", help="audit a structured solution report against a case")
    p.add_argument("case")
    p.add_argument("solution")
    add_tol(p)

    p = sub.add_parser("compare", help="check the standard / carbon-tax equivalences")
    p.add_argument("case")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--tax", type=_non_negative_float)
    group.add_argument("--standard", action="store_true")
    add_tol(p)

    p = sub.add_parser("allocate", help="optimal carbon allocation for a given dispatch")
    p.add_argument("case")
    p.add_argument("--dispatch", required=True, help='JSON file: {"p_g": [...], "p_d": [...]} or id -> MW maps')

    p = sub.add_parser("random", help="generate a synthetic case")
    p.add_argument("--buses", type=int, required=True)
    p.add_argument("--gens", type=int, required=True)
    p.add_argument("--loads", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--zero-lower-bounds", action="store_true")
    p.add_argument("--out", help="JSON file (default standard output)")
    p.add_argument("--csv-dir", help="also write the four CSV tables here")
    return parser


def _tolerance(args) -> float:
    if getattr(args, "tol", None) is not None:
        return args.tol
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"{TOL_ENV}={raw!r} is not a number") from None
    if not value > 0:
        raise UsageError(f"{TOL_ENV} must be positive")
    return value


def load_case(source: str) -> SystemCase:
    return parse_case_csv(source) if Path(source).is_dir() else parse_case(Path(source))


def _write(text: str, out: str | None, stdout) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def _cmd_solve(args, tol, stdout) -> int:
    case = load_case(args.case)
    opts = SolveOptions(kkt_tolerance=tol)
    if args.standard:
        sol, duals = solve_standard(case, opts)
    elif args.tax is not None:
        sol, duals = solve_with_tax(case, args.tax, opts)
    else:
        sol, duals = solve_clearing(case, opts)
    _write(emit_report([SolveRecord(case, sol, duals, case.name)], args.format), args.out, stdout)
    return 0


def _cmd_sweep(args, tol, stdout) -> int:
    case = load_case(args.case)
    spec = SweepSpec(args.consumer, *args.carbon_cost)
    records = run_sweep(case, spec, SolveOptions(kkt_tolerance=tol))
    _write(emit_report(records, args.format), args.out, stdout)
    return 0


def _cmd_verify(args, tol, stdout, stderr) -> int:
    case = load_case(args.case)
    try:
        sol, duals = load_solution(Path(args.solution), case)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, CarbonClearError):
            raise
        raise SchemaError(f"unreadable solution file: {exc}") from None
    report = verify_equilibrium(case, sol, duals, tol)
    br = report.best_responses
    lines = [f"objective {report.objective:.6f}", f"max scaled residual {report.residuals.max_residual:.3e} ({report.residuals.worst})"]
    lines += [f"residual {item}" for item in report.residuals.failures()]
    for name, gap in br.gaps().items():
        if abs(gap) > tol * br.value_scale:
            lines.append(f"best-response gap {name}: {gap:.6g}")
    stdout.write("\n".join(lines) + "\n")
    if report.passed:
        stdout.write("equilibrium verified\n")
        return 0
    _error(stderr, "VerificationError", f"solution fails the equilibrium audit (worst: {report.residuals.worst})")
    return 1


def _cmd_compare(args, tol, stdout, stderr) -> int:
    case = load_case(args.case)
    opts = SolveOptions(kkt_tolerance=tol)
    rep = equivalence_standard(case, tol, opts) if args.standard else equivalence_tax(case, args.tax, tol, opts)
    doc = {
        "comparison": "standard" if args.standard else f"tax={args.tax}",
        "reference_objective": rep.reference_objective,
        "special_objective": rep.special_objective,
        "objective_gap": rep.objective_gap,
        "reference_emissions": rep.reference_emissions,
        "special_emissions": rep.special_emissions,
        "reference_gen_cost": rep.reference_gen_cost,
        "special_gen_cost": rep.special_gen_cost,
        "price_gap": rep.price_gap,
        "passed": rep.passed,
    }
    stdout.write(json.dumps(doc, indent=2) + "\n")
    if rep.passed:
        return 0
    _error(stderr, "VerificationError", f"objective gap {rep.objective_gap:.3e} exceeds {tol:g}")
    return 1


def _dispatch_vector(doc: dict, key: str, ids: list[str]) -> np.ndarray:
    value = doc.get(key)
    if isinstance(value, dict):
        missing = [i for i in ids if i not in value]
        if missing:
            raise SchemaError(f"{key}: no value for {missing[0]!r}")
        return np.array([float(value[i]) for i in ids])
    if isinstance(value, list) and len(value) == len(ids):
        return np.array([float(v) for v in value])
    raise SchemaError(f"{key}: expected {len(ids)} values or an id -> MW map")


def _cmd_allocate(args, tol, stdout) -> int:
    case = load_case(args.case)
    try:
        doc = json.loads(Path(args.dispatch).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"dispatch file: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SchemaError("dispatch file: expected an object")
    p_g = _dispatch_vector(doc, "p_g", [g.id for g in case.generators])
    p_d = _dispatch_vector(doc, "p_d", [d.id for d in case.consumers])
    pi = allocate_greedy(p_g, p_d, case.emission, case.carbon_cost)
    lp_pi, _ = allocate_lp(p_g, p_d, case.emission, case.carbon_cost)
    out = {
        "generators": [g.id for g in case.generators],
        "consumers": [d.id for d in case.consumers],
        "pi": [[float(x) for x in row] for row in pi.pi],
        "e_d": [float(x) for x in emissions_of(pi, case.emission)],
        "carbon_cost": allocation_cost(pi, case.emission, case.carbon_cost),
        "lp_carbon_cost": allocation_cost(lp_pi, case.emission, case.carbon_cost),
    }
    stdout.write(json.dumps(out, indent=2) + "\n")
    return 0


def _cmd_random(args, stdout) -> int:
    case = random_case(args.buses, args.gens, args.loads, args.seed, zero_lower_bounds=args.zero_lower_bounds)
    text = dump_case(case)
    _write(text, args.out, stdout)
    if args.csv_dir:
        write_case_csv(case, args.csv_dir)
    return 0


def _error(stderr, kind: str, message: str) -> None:
    stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage text
        return int(exc.code or 0)
    try:
        tol = _tolerance(args)
        if args.command == "solve":
            return _cmd_solve(args, tol, stdout)
        if args.command == "sweep":
            return _cmd_sweep(args, tol, stdout)
        if args.command == "verify":
            return _cmd_verify(args, tol, stdout, stderr)
        if args.command == "compare":
            return _cmd_compare(args, tol, stdout, stderr)
        if args.command == "allocate":
            return _cmd_allocate(args, tol, stdout)
        return _cmd_random(args, stdout)
    except UsageError as exc:
        parser.print_usage(stderr)
        stderr.write(f"carbon-clear: error: {exc}\n")
        return 2
    except CarbonClearError as exc:
        _error(stderr, exc.kind, str(exc))
        return 1
    except OSError as exc:
        _error(stderr, "IoError", str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
