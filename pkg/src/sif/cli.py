"""``sif`` command line: instrument, run, check, bench and lattice-check.

Exit codes: 0 success, 1 error (or failing suite), 2 usage, 3 leak.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cases import parse_cases
from .instrument import InstrumentError, format_manifest, instrument_program
from .ir.cfg import CfgError
from .ir.check import IRError
from .ir.parser import parse_program
from .ir.printer import print_program
from .lattice import LatticeError, check_laws, parse_lattice
from .lexer import SifSyntaxError
from .runtime import (
    DEFAULT_MAX_STACK,
    Leak,
    RunError,
    format_verdicts,
    geometric_mean,
    measure_overhead,
    run_case,
    run_suite,
    summarize,
)
from .specs import SpecError, parse_specs, resolve_specs
from .values import format_value

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_LEAK = 0, 1, 2, 3

# factors measured for the original JVM implementation, printed for comparison only
REFERENCE_FACTORS = {
    "List Employees": 2.34,
    "Get Employee Info": 2.75,
    "Get Avg Salary": 2.02,
    "Add new Supervisor": 1.58,
    "Add New Associate": 1.40,
}
REFERENCE_MEAN = 1.79

log = logging.getLogger("sif")

_PIPELINE_ERRORS = (SifSyntaxError, LatticeError, SpecError, IRError, CfgError, InstrumentError, RunError)


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _inputs(args, *names: str) -> dict[str, str]:
    # read everything up front so a bad path fails before any stage runs
    return {n: _read(getattr(args, n)) for n in names}


def _load(args, texts: dict[str, str]):
    lat = parse_lattice(texts["lattice"])
    prog = parse_program(texts["ir"], args.ir)
    specs = resolve_specs(parse_specs(texts["specs"], args.specs), prog, lat) if "specs" in texts else None
    return prog, lat, specs


def cmd_instrument(args) -> int:
    texts = _inputs(args, "ir", "specs", "lattice")
    prog, lat, specs = _load(args, texts)
    out, layout = instrument_program(prog, specs, lat)
    Path(args.output).write_text(print_program(out), encoding="utf-8")
    log.info("wrote %s", args.output)
    if args.manifest:
        Path(args.manifest).write_text(format_manifest(layout), encoding="utf-8")
        log.info("wrote %s", args.manifest)
    return EXIT_OK


def cmd_run(args) -> int:
    texts = _inputs(args, "ir", "lattice", "case")
    prog, lat, _ = _load(args, texts)
    cases = parse_cases(texts["case"], args.case)
    if args.name:
        cases = [c for c in cases if c.name == args.name]
    if len(cases) != 1:
        raise UsageError(f"{args.case}: expected exactly one case, found {len(cases)} (use --name)")
    outcome = run_case(prog, lat, cases[0], args.max_stack)
    if isinstance(outcome, Leak):
        print(f"leak\t{outcome.report}")
        return EXIT_LEAK
    print(f"normal\t{format_value(outcome.value)}\t{outcome.label}")
    return EXIT_OK


def cmd_check(args) -> int:
    texts = _inputs(args, "ir", "specs", "lattice", "cases")
    prog, lat, specs = _load(args, texts)
    cases = parse_cases(texts["cases"], args.cases)
    out, _ = instrument_program(prog, specs, lat)
    verdicts = run_suite(out, lat, cases, args.max_stack)
    sys.stdout.write(format_verdicts(verdicts))
    summary = summarize(verdicts)
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    log.info("%d/%d cases as expected", summary["passed"], summary["total"])
    return EXIT_OK if summary["failed"] == 0 else EXIT_ERROR


def cmd_bench(args) -> int:
    texts = _inputs(args, "ir", "specs", "lattice", "cases")
    cases = parse_cases(texts["cases"], args.cases)
    if not cases:
        raise UsageError(f"{args.cases}: no cases to time")
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    prog, lat, specs = _load(args, texts)
    out, _ = instrument_program(prog, specs, lat)
    rows = measure_overhead(prog, out, lat, cases, args.reps)
    print("case\toriginal_ms\tinstrumented_ms\tfactor\treference")
    for r in rows:
        ref = REFERENCE_FACTORS.get(r.case)
        print(f"{r.case}\t{r.original * 1e3:.3f}\t{r.instrumented * 1e3:.3f}\t{r.factor:.2f}\t"
              f"{'' if ref is None else f'{ref:.2f}'}")
    print(f"geometric mean\t\t\t{geometric_mean([r.factor for r in rows]):.2f}\t{REFERENCE_MEAN:.2f}")
    return EXIT_OK


def cmd_lattice_check(args) -> int:
    lat = parse_lattice(_read(args.lattice))
    universe = lat.universe(args.concretes)
    problems = check_laws(lat, universe)
    if problems:
        print(f"violation: {problems[0]}", file=sys.stderr)
        print(f"{len(problems)} law violation(s) over {len(universe)} labels")
        return EXIT_ERROR
    print(f"ok: {len(universe)} labels, partial order and least upper bounds hold")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sif", description="Dependent-label information flow monitor for SIF-IR")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("instrument", help="in-line the monitor into a program")
    p.add_argument("--ir", required=True)
    p.add_argument("--specs", required=True)
    p.add_argument("--lattice", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--manifest", help="also write the shadow-slot layout here")
    p.set_defaults(func=cmd_instrument)

    p = sub.add_parser("run", help="run one case against an (instrumented) program")
    p.add_argument("--ir", required=True)
    p.add_argument("--lattice", required=True)
    p.add_argument("--case", required=True, help="case file holding the call to make")
    p.add_argument("--name", help="pick this case when the file holds several")
    p.add_argument("--max-stack", type=int, default=DEFAULT_MAX_STACK)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="instrument and run a whole case suite")
    p.add_argument("--ir", required=True)
    p.add_argument("--specs", required=True)
    p.add_argument("--lattice", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--summary", help="write a JSON summary here")
    p.add_argument("--max-stack", type=int, default=DEFAULT_MAX_STACK)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="time original against instrumented runs")
    p.add_argument("--ir", required=True)
    p.add_argument("--specs", required=True)
    p.add_argument("--lattice", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--reps", type=int, default=20)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("lattice-check", help="verify partial-order and lub laws of a lattice file")
    p.add_argument("--lattice", required=True)
    p.add_argument("--concretes", type=int, nargs="+", default=[1, 2],
                   help="concrete parameter values used to sample family members")
    p.set_defaults(func=cmd_lattice_check)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="sif: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sif {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _PIPELINE_ERRORS as exc:
        print(f"sif {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
