"""Interpreter for SIF-IR, with or without monitor instructions.

The same interpreter runs original and instrumented programs; monitor
instructions are simply absent from the former. Execution uses an
explicit frame stack so deep call chains fail with a clean error instead
of exhausting the Python stack.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Union

from .cases import LEAK, NORMAL, Case
from .ir.nodes import (
    LABEL_PREFIX,
    LABEL_TYPE,
    PC,
    AssertFlow,
    BinOp,
    Branch,
    Call,
    Const,
    Copy,
    Goto,
    InstantiateTemplate,
    JoinInto,
    LeakHalt,
    Lit,
    LoadField,
    LoadLabel,
    MethodDef,
    New,
    Phi,
    PhiLabel,
    Program,
    Return,
    SavePc,
    SetPc,
    StoreField,
    StoreLabel,
    Var,
)
from .lattice import PUBLIC, Label, LatticeDef, LatticeError, UnresolvedDependency, instantiate
from .values import Ref, format_value, wrap_int

DEFAULT_MAX_STACK = 1024
DEFAULT_MAX_STEPS = 20_000_000

_DEFAULTS = {"int": 0, "long": 0, "double": 0.0, "bool": False}


class RunError(Exception):
    """Malformed program or failed base operation; distinct from a leak."""

    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.message = message
        self.where = where


@dataclass(frozen=True)
class LeakReport:
    method: str
    block: str
    index: int
    label: Label | None
    bound: Label | None
    reason: str

    def __str__(self) -> str:
        flow = f" ({self.label} not <= {self.bound})" if self.label is not None and self.bound is not None else ""
        return f"leak in {self.method} at {self.block}[{self.index}]: {self.reason}{flow}"


@dataclass(frozen=True)
class Normal:
    value: object
    label: Label | None = None


@dataclass(frozen=True)
class Leak:
    report: LeakReport


RunOutcome = Union[Normal, Leak]


@dataclass
class ObjectInstance:
    cls: str
    fields: dict[str, object]
    shadow: dict[str, Label]


@dataclass(frozen=True)
class SlotUpdate:
    """One write to an object's field-label or object-label slot."""

    oid: int
    cls: str
    slot: str
    old: Label
    new: Label


@dataclass
class Frame:
    cls: str
    method: MethodDef
    code: "_Code"
    this: Ref
    block: str
    ip: int = 0
    vars: dict[str, object] = field(default_factory=dict)
    labels: dict[str, Label] = field(default_factory=dict)
    pc: Label = PUBLIC
    ret_dst: str | None = None

    @property
    def where(self) -> str:
        return f"{self.cls}.{self.method.name}"


class _Code:
    """Block table of one method, prepared once per interpreter."""

    def __init__(self, m: MethodDef):
        self.blocks = {b.label: b.instrs for b in m.blocks}
        self.entry = m.blocks[0].label
        self.fallthrough = {a.label: b.label for a, b in zip(m.blocks, m.blocks[1:])}
        self.head = {}
        for b in m.blocks:
            k = 0
            while k < len(b.instrs) and isinstance(b.instrs[k], (Phi, PhiLabel, SetPc)):
                k += 1
            self.head[b.label] = k


def _is_method_slot(slot: str) -> bool:
    return "$" in slot[len(LABEL_PREFIX):]


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def binop(op: str, a, b):
    """Base semantics of the IR binary operators."""
    if op == "concat":
        return format_value(a) + format_value(b)
    if op == "eq":
        if _num(a) and _num(b):
            return a == b
        return type(a) is type(b) and a == b
    if op in ("and", "or"):
        if not (isinstance(a, bool) and isinstance(b, bool)):
            raise RunError(f"{op} needs booleans, got {format_value(a)} and {format_value(b)}")
        return (a and b) if op == "and" else (a or b)
    if not (_num(a) and _num(b)):
        raise RunError(f"{op} needs numbers, got {format_value(a)} and {format_value(b)}")
    if op == "lt":
        return a < b
    if op == "gt":
        return a > b
    floating = isinstance(a, float) or isinstance(b, float)
    if op == "add":
        r = a + b
    elif op == "sub":
        r = a - b
    elif op == "mul":
        r = a * b
    elif op == "div":
        if b == 0:
            raise RunError("division by zero")
        if floating:
            r = a / b
        else:
            q = abs(a) // abs(b)
            r = q if (a >= 0) == (b >= 0) else -q
    else:
        raise RunError(f"unknown operator {op}")
    return float(r) if floating else wrap_int(r)


class _Halt(Exception):
    def __init__(self, report: LeakReport):
        self.report = report


class Interpreter:
    """Runs one program; each :meth:`run` gets a fresh heap."""

    def __init__(self, program: Program, lat: LatticeDef | None = None, max_stack: int = DEFAULT_MAX_STACK,
                 max_steps: int = DEFAULT_MAX_STEPS, log_slots: bool = False):
        self.p = program
        self.lat = lat
        self.max_stack = max_stack
        self.max_steps = max_steps
        self.log_slots = log_slots
        self._code: dict[tuple[str, str], tuple[str, MethodDef, _Code]] = {}
        self._layout: dict[str, tuple[dict, dict]] = {}
        self._joins: dict[tuple[Label, Label], Label] = {}
        self.heap: list[ObjectInstance] = []
        self.slot_log: list[SlotUpdate] = []

    # helpers

    def method(self, cls: str, name: str) -> tuple[str, MethodDef, _Code]:
        key = (cls, name)
        hit = self._code.get(key)
        if hit is None:
            found = self.p.lookup_method(cls, name)
            if found is None:
                raise RunError(f"no method {name} on {cls}")
            owner, m = found
            hit = self._code[key] = (owner.name, m, _Code(m))
        return hit

    def new_object(self, cls: str) -> Ref:
        if cls not in self._layout:
            if not self.p.has_class(cls):
                raise RunError(f"unknown class {cls}")
            fields, shadow = {}, {}
            for _, f in self.p.all_fields(cls):
                if f.type == LABEL_TYPE:
                    shadow[f.name] = PUBLIC
                else:
                    fields[f.name] = _DEFAULTS.get(f.type)
            self._layout[cls] = (fields, shadow)
        fields, shadow = self._layout[cls]
        self.heap.append(ObjectInstance(cls, dict(fields), dict(shadow)))
        return Ref(len(self.heap) - 1)

    def deref(self, value, frame: Frame, what: str) -> ObjectInstance:
        if not isinstance(value, Ref):
            if value is None:
                raise RunError(f"null dereference in {what}", frame.where)
            raise RunError(f"{format_value(value)} is not an object in {what}", frame.where)
        return self.heap[value.oid]

    def join(self, a: Label, b: Label) -> Label:
        key = (a, b)
        hit = self._joins.get(key)
        if hit is None:
            hit = self._joins[key] = self._lat().join(a, b)
        return hit

    def _lat(self) -> LatticeDef:
        if self.lat is None:
            raise RunError("monitor instruction executed without a lattice")
        return self.lat

    @staticmethod
    def value(frame: Frame, op):
        if type(op) is Lit:
            return op.value
        try:
            return frame.vars[op.name]
        except KeyError:
            raise RunError(f"variable {op.name} read before definition", frame.where) from None

    @staticmethod
    def label(frame: Frame, op) -> Label:
        if isinstance(op, Label):
            return op
        if op == PC:
            return frame.pc
        try:
            return frame.labels[op]
        except KeyError:
            raise RunError(f"label {op} read before definition", frame.where) from None

    def _leak(self, frame: Frame, reason: str, label=None, bound=None) -> _Halt:
        return _Halt(LeakReport(frame.where, frame.block, frame.ip - 1, label, bound, reason))

    def _enter(self, frame: Frame, target: str) -> None:
        code = frame.code
        instrs = code.blocks[target]
        head = code.head[target]
        came_from = frame.block
        frame.block = target
        frame.ip = head
        if not head:
            return
        values, labels, restore = {}, {}, None
        for ins in instrs[:head]:
            if type(ins) is SetPc:
                restore = self.label(frame, ins.src)
                continue
            src = next((v for b, v in ins.incoming if b == came_from), None)
            if src is None:
                raise RunError(f"phi for {ins.dst} has no entry for {came_from}", frame.where)
            if type(ins) is Phi:
                values[ins.dst] = self.value(frame, Var(src))
            else:
                labels[ins.dst] = self.label(frame, src)
        if restore is not None:
            frame.pc = restore
        frame.vars.update(values)
        for k, v in labels.items():
            if k == PC:
                frame.pc = v
            else:
                frame.labels[k] = v

    # execution

    def run(self, entry: str | None, inputs: list[tuple[object, Label]], pc: Label = PUBLIC) -> RunOutcome:
        entry = entry or self.p.entry
        if not entry:
            raise RunError("no entry method given")
        cls, _, name = entry.partition(".")
        owner, m, code = self.method(cls, name)
        if len(inputs) != len(m.params):
            raise RunError(f"{entry} expects {len(m.params)} arguments, got {len(inputs)}")
        self.heap = []
        self.slot_log = []
        this = self.new_object(cls)
        obj = self.heap[this.oid]
        for i, (_, lab) in enumerate(inputs):
            slot = f"{LABEL_PREFIX}{name}$p{i}"
            if slot in obj.shadow:
                obj.shadow[slot] = lab
        pcin = f"{LABEL_PREFIX}{name}$pcIn"
        if pcin in obj.shadow:
            obj.shadow[pcin] = pc
        frame = Frame(owner, m, code, this, code.entry, pc=pc)
        frame.vars["this"] = this
        for (pname, _), (v, _) in zip(m.params, inputs):
            frame.vars[pname] = v
        try:
            value = self._loop(frame)
        except _Halt as h:
            return Leak(h.report)
        ret = obj.shadow.get(f"{LABEL_PREFIX}{name}$ret")
        return Normal(value, ret)

    def _loop(self, frame: Frame):
        stack = [frame]
        steps = 0
        f = frame
        self._enter(f, f.block) if f.code.head[f.block] else None
        while True:
            steps += 1
            if steps > self.max_steps:
                raise RunError(f"step limit {self.max_steps} exceeded", f.where)
            ins = f.code.blocks[f.block][f.ip]
            f.ip += 1
            t = type(ins)
            if t is JoinInto:
                out = PUBLIC
                for op in ins.operands:
                    out = self.join(out, self.label(f, op))
                f.labels[ins.dst] = out
            elif t is Copy:
                f.vars[ins.dst] = self.value(f, Var(ins.src))
            elif t is Const:
                f.vars[ins.dst] = ins.value.value
            elif t is BinOp:
                try:
                    f.vars[ins.dst] = binop(ins.op, self.value(f, ins.lhs), self.value(f, ins.rhs))
                except RunError as exc:
                    raise RunError(exc.message, f.where) from None
            elif t is LoadField:
                obj = self.deref(self.value(f, Var(ins.obj)), f, str(ins.obj))
                try:
                    f.vars[ins.dst] = obj.fields[ins.field]
                except KeyError:
                    raise RunError(f"{obj.cls} has no field {ins.field}", f.where) from None
            elif t is StoreField:
                obj = self.deref(self.value(f, Var(ins.obj)), f, str(ins.obj))
                if ins.field not in obj.fields:
                    raise RunError(f"{obj.cls} has no field {ins.field}", f.where)
                obj.fields[ins.field] = self.value(f, ins.src)
            elif t is LoadLabel:
                ref = f.vars.get(ins.obj)
                f.labels[ins.dst] = PUBLIC if ref is None else self.deref(ref, f, ins.obj).shadow[ins.slot]
            elif t is StoreLabel:
                ref = f.vars.get(ins.obj)
                if ref is not None:
                    obj = self.deref(ref, f, ins.obj)
                    new = self.label(f, ins.src)
                    if self.log_slots and not _is_method_slot(ins.slot):
                        self.slot_log.append(SlotUpdate(ref.oid, obj.cls, ins.slot, obj.shadow[ins.slot], new))
                    obj.shadow[ins.slot] = new
            elif t is New:
                f.vars[ins.dst] = self.new_object(ins.cls)
            elif t is Branch:
                cond = self.value(f, Var(ins.cond))
                if not isinstance(cond, bool):
                    raise RunError(f"branch on non-boolean {format_value(cond)}", f.where)
                self._enter(f, ins.target if cond else f.code.fallthrough[f.block])
            elif t is Goto:
                self._enter(f, ins.target)
            elif t is Call:
                recv = self.value(f, Var(ins.obj))
                obj = self.deref(recv, f, f"call {ins.obj}.{ins.method}")
                owner, m, code = self.method(obj.cls, ins.method)
                if len(stack) >= self.max_stack:
                    raise RunError(f"stack depth limit {self.max_stack} exceeded", f.where)
                callee = Frame(owner, m, code, recv, code.entry, pc=f.pc, ret_dst=ins.dst)
                callee.vars["this"] = recv
                for (pname, _), a in zip(m.params, ins.args):
                    callee.vars[pname] = self.value(f, a)
                stack.append(callee)
                f = callee
                if code.head[code.entry]:
                    self._enter(f, code.entry)
            elif t is Return:
                result = self.value(f, ins.value)
                stack.pop()
                if not stack:
                    return result
                dst = f.ret_dst
                f = stack[-1]
                f.vars[dst] = result
            elif t is AssertFlow:
                value, bound = self.label(f, ins.value), self.label(f, ins.bound)
                if not self._lat().leq(value, bound):
                    raise self._leak(f, ins.reason or "illegal flow", value, bound)
            elif t is SetPc:
                f.pc = self.label(f, ins.src)
            elif t is SavePc:
                f.labels[ins.dst] = f.pc
            elif t is InstantiateTemplate:
                f.labels[ins.dst] = self._instantiate(f, ins)
            elif t is PhiLabel or t is Phi:
                raise RunError(f"phi {ins.dst} after the start of block {f.block}", f.where)
            elif t is LeakHalt:
                raise self._leak(f, ins.reason)
            else:
                raise RunError(f"cannot execute {ins!r}", f.where)

    def _instantiate(self, f: Frame, ins: InstantiateTemplate) -> Label:
        if ins.template is not None:
            template, env, what = ins.template, f.vars, str(ins.template)
        else:
            obj = self.deref(self.value(f, Var(ins.obj)), f, f"label of {ins.obj}.{ins.field}")
            template = self.p.field_annotation(obj.cls, ins.field)
            what = f"{obj.cls}.{ins.field}"
            if template is None:
                raise self._leak(f, f"no label annotation for {what}")
            env = obj.fields
        try:
            label = instantiate(template, env)
            self._lat().check(label)
        except UnresolvedDependency as exc:
            raise self._leak(f, f"cannot resolve label of {what}: {exc}") from None
        except LatticeError as exc:
            raise RunError(f"bad label for {what}: {exc}", f.where) from None
        return label


def run(p: Program, lat: LatticeDef | None, inputs: list[tuple[object, Label]], pc: Label = PUBLIC,
        entry: str | None = None, max_stack: int = DEFAULT_MAX_STACK) -> RunOutcome:
    """Run ``entry`` (default: the program's entry) with labelled arguments."""
    return Interpreter(p, lat, max_stack=max_stack).run(entry, inputs, pc)


def run_case(p: Program, lat: LatticeDef | None, case: Case, max_stack: int = DEFAULT_MAX_STACK) -> RunOutcome:
    return Interpreter(p, lat, max_stack=max_stack).run(case.entry, case.inputs(), case.pc)


def observation(outcome: RunOutcome):
    """What a Public observer sees: the value if its label is Public, else nothing."""
    if isinstance(outcome, Leak):
        return ("leak",)
    return ("value", outcome.value) if outcome.label == PUBLIC else ("hidden",)


def monotonicity_violations(log: list[SlotUpdate], lat: LatticeDef) -> list[SlotUpdate]:
    return [u for u in log if not lat.leq(u.old, u.new)]


# -- suites -------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    case: str
    expected: str
    actual: str
    passed: bool
    detail: str


def _describe(outcome) -> tuple[str, str]:
    if isinstance(outcome, Leak):
        return LEAK, str(outcome.report)
    if isinstance(outcome, RunError):
        return "error", str(outcome)
    return NORMAL, f"{format_value(outcome.value)} : {outcome.label}"


def run_suite(p: Program, lat: LatticeDef, cases: list[Case], max_stack: int = DEFAULT_MAX_STACK) -> list[Verdict]:
    out = []
    for c in cases:
        try:
            outcome = run_case(p, lat, c, max_stack)
        except RunError as exc:
            outcome = exc
        actual, detail = _describe(outcome)
        out.append(Verdict(c.name, c.expect, actual, actual == c.expect, detail))
    return out


VERDICT_COLUMNS = ("case", "expected", "actual", "verdict", "detail")


def format_verdicts(verdicts: list[Verdict]) -> str:
    lines = ["\t".join(VERDICT_COLUMNS)]
    for v in verdicts:
        lines.append("\t".join((v.case, v.expected, v.actual, "pass" if v.passed else "FAIL", v.detail)))
    return "\n".join(lines) + "\n"


def summarize(verdicts: list[Verdict]) -> dict:
    """Machine-readable summary; key order is stable."""
    passed = sum(v.passed for v in verdicts)
    return {
        "total": len(verdicts),
        "passed": passed,
        "failed": len(verdicts) - passed,
        "cases": [{"case": v.case, "expected": v.expected, "actual": v.actual, "passed": v.passed} for v in verdicts],
    }


# -- overhead -----------------------------------------------------------------


@dataclass(frozen=True)
class OverheadRow:
    case: str
    original: float
    instrumented: float

    @property
    def factor(self) -> float:
        return self.instrumented / self.original if self.original > 0 else float("nan")


def _time(interp: Interpreter, case: Case, reps: int) -> float:
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        interp.run(case.entry, case.inputs(), case.pc)
        best = min(best, time.perf_counter() - t0)
    return best


def measure_overhead(original: Program, instrumented: Program, lat: LatticeDef, cases: list[Case],
                     repetitions: int = 20) -> list[OverheadRow]:
    """Best-of-``repetitions`` wall time per case, original versus instrumented."""
    plain = Interpreter(original, lat)
    monitored = Interpreter(instrumented, lat)
    rows = []
    for c in cases:
        # one untimed run each so method tables are prepared before timing
        plain.run(c.entry, c.inputs(), c.pc)
        monitored.run(c.entry, c.inputs(), c.pc)
        rows.append(OverheadRow(c.name, _time(plain, c, repetitions), _time(monitored, c, repetitions)))
    return rows


def geometric_mean(values: list[float]) -> float:
    values = [v for v in values if v > 0 and not math.isnan(v)]
    if not values:
        return float("nan")
    return math.exp(sum(math.log(v) for v in values) / len(values))
