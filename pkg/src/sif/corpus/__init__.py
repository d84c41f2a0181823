"""Bundled example programs: the employee directory, its seeded leaks and small fixtures."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..cases import Case, parse_cases
from ..instrument import instrument_program
from ..ir.check import check_program
from ..ir.nodes import ClassDef, Program
from ..ir.parser import parse_program, parse_program_unchecked
from ..lattice import LatticeDef, parse_lattice
from ..specs import ResolvedSpecs, parse_specs, resolve_specs

CORPUS_DIR = Path(__file__).resolve().parent
SEEDED_DIR = CORPUS_DIR / "seeded"

APP_IR = CORPUS_DIR / "employees.sif"
APP_SPECS = CORPUS_DIR / "employees.spec"
APP_LATTICE = CORPUS_DIR / "employees.lattice"
APP_CASES = CORPUS_DIR / "employees.cases"
BENCH_CASES = CORPUS_DIR / "bench.cases"
SEEDED_CASES = CORPUS_DIR / "seeded.cases"
EXAMPLE_IR = CORPUS_DIR / "example.sif"
GAP_IR = CORPUS_DIR / "ni_gap.sif"


def read(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def apply_patch(base: Program, patch: Program) -> Program:
    """Replace or add methods and fields class by class; unknown classes are appended."""
    classes = list(base.classes)
    for pc in patch.classes:
        idx = next((i for i, c in enumerate(classes) if c.name == pc.name), None)
        if idx is None:
            classes.append(pc)
            continue
        old = classes[idx]
        methods = list(old.methods)
        for m in pc.methods:
            hit = next((i for i, om in enumerate(methods) if om.name == m.name), None)
            if hit is None:
                methods.append(m)
            else:
                methods[hit] = m
        known = {f.name for f in old.fields}
        fields = old.fields + tuple(f for f in pc.fields if f.name not in known)
        classes[idx] = ClassDef(old.name, old.superclass, fields, tuple(methods), old.instrumented, old.annotations)
    out = Program(tuple(classes), patch.entry or base.entry)
    check_program(out)
    return out


@dataclass(frozen=True)
class Corpus:
    program: Program
    lattice: LatticeDef
    specs: ResolvedSpecs

    def instrumented(self) -> Program:
        return instrument_program(self.program, self.specs, self.lattice)[0]


def load_app(program: Program | None = None) -> Corpus:
    lat = parse_lattice(read(APP_LATTICE))
    prog = program or parse_program(read(APP_IR), str(APP_IR))
    specs = resolve_specs(parse_specs(read(APP_SPECS), str(APP_SPECS)), prog, lat)
    return Corpus(prog, lat, specs)


def load_cases(path: Path = APP_CASES) -> list[Case]:
    return parse_cases(read(path), str(path))


def seeded_variants() -> dict[str, Program]:
    """Mutated copies of the employee directory, keyed by variant name."""
    base = parse_program(read(APP_IR), str(APP_IR))
    out = {}
    for path in sorted(SEEDED_DIR.glob("*.sif")):
        out[path.stem] = apply_patch(base, parse_program_unchecked(read(path), str(path)))
    return out
