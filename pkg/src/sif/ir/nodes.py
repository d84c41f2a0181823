"""SIF-IR data structures.

Everything is a frozen dataclass so that programs compare structurally;
parse/print round-trips and the erasure property rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from ..lattice import Label, LabelTemplate

PRIMITIVE_TYPES = frozenset({"int", "long", "double", "string", "bool"})
LABEL_TYPE = "label"
VOID = "void"
BINOPS = ("add", "sub", "mul", "div", "concat", "eq", "lt", "gt", "and", "or")
LABEL_PREFIX = "secLbl$"
PC = "pc"


def is_label_name(name: str) -> bool:
    return name.startswith(LABEL_PREFIX)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Lit:
    value: object
    kind: str = field(init=False)

    def __post_init__(self):
        v = self.value
        if v is None:
            kind = "null"
        elif isinstance(v, bool):
            kind = "bool"
        elif isinstance(v, int):
            kind = "int"
        elif isinstance(v, float):
            kind = "float"
        elif isinstance(v, str):
            kind = "str"
        else:
            raise TypeError(f"unsupported literal {v!r}")
        object.__setattr__(self, "kind", kind)


Operand = Union[Var, Lit]
# label operands are label-variable names, "pc", or literal labels
LabelOperand = Union[str, Label]


# -- base instructions ------------------------------------------------------


@dataclass(frozen=True)
class Const:
    dst: str
    value: Lit


@dataclass(frozen=True)
class Copy:
    dst: str
    src: str


@dataclass(frozen=True)
class LoadField:
    dst: str
    obj: str
    field: str


@dataclass(frozen=True)
class StoreField:
    obj: str
    field: str
    src: Operand


@dataclass(frozen=True)
class New:
    dst: str
    cls: str


@dataclass(frozen=True)
class Call:
    dst: str
    obj: str
    method: str
    args: tuple[Operand, ...] = ()


@dataclass(frozen=True)
class BinOp:
    dst: str
    op: str
    lhs: Operand
    rhs: Operand


@dataclass(frozen=True)
class Phi:
    dst: str
    incoming: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Branch:
    cond: str
    target: str


@dataclass(frozen=True)
class Goto:
    target: str


@dataclass(frozen=True)
class Return:
    value: Operand


# -- monitor instructions ---------------------------------------------------


@dataclass(frozen=True)
class JoinInto:
    dst: str
    operands: tuple[LabelOperand, ...]


@dataclass(frozen=True)
class LoadLabel:
    dst: str
    obj: str
    slot: str


@dataclass(frozen=True)
class StoreLabel:
    obj: str
    slot: str
    src: str


@dataclass(frozen=True)
class AssertFlow:
    value: str
    bound: str
    reason: str = ""


@dataclass(frozen=True)
class SetPc:
    src: str


@dataclass(frozen=True)
class SavePc:
    dst: str


@dataclass(frozen=True)
class PhiLabel:
    dst: str  # a label variable or PC
    incoming: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class InstantiateTemplate:
    """Build a label from a template.

    Either ``template`` is given and its dependencies name local
    variables, or ``obj``/``field`` name a field whose annotation is looked
    up on the runtime class of ``obj`` and instantiated over that object.
    """

    dst: str
    template: LabelTemplate | None = None
    obj: str | None = None
    field: str | None = None


@dataclass(frozen=True)
class LeakHalt:
    reason: str


TERMINATORS = (Branch, Goto, Return)
BASE_INSTRUCTIONS = (Const, Copy, LoadField, StoreField, New, Call, BinOp, Phi) + TERMINATORS
MONITOR_INSTRUCTIONS = (
    JoinInto,
    LoadLabel,
    StoreLabel,
    AssertFlow,
    SetPc,
    SavePc,
    PhiLabel,
    InstantiateTemplate,
    LeakHalt,
)
Instruction = Union[
    Const, Copy, LoadField, StoreField, New, Call, BinOp, Phi, Branch, Goto, Return,
    JoinInto, LoadLabel, StoreLabel, AssertFlow, SetPc, SavePc, PhiLabel,
    InstantiateTemplate, LeakHalt,
]


def is_monitor(instr) -> bool:
    return isinstance(instr, MONITOR_INSTRUCTIONS)


# -- program structure ------------------------------------------------------


@dataclass(frozen=True)
class Block:
    label: str
    instrs: tuple

    @property
    def terminator(self):
        return self.instrs[-1]

    @property
    def body(self) -> tuple:
        return self.instrs[:-1]


@dataclass(frozen=True)
class FieldDef:
    name: str
    type: str


@dataclass(frozen=True)
class MethodDef:
    name: str
    params: tuple[tuple[str, str], ...]
    return_type: str
    blocks: tuple[Block, ...]

    @property
    def param_names(self) -> list[str]:
        return [p for p, _ in self.params]

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)


@dataclass(frozen=True)
class ClassDef:
    name: str
    superclass: str | None = None
    fields: tuple[FieldDef, ...] = ()
    methods: tuple[MethodDef, ...] = ()
    instrumented: bool = True
    # field annotations carried by instrumented output for the runtime
    annotations: tuple[tuple[str, LabelTemplate], ...] = ()

    def method(self, name: str) -> MethodDef | None:
        for m in self.methods:
            if m.name == name:
                return m
        return None


@dataclass(frozen=True)
class Program:
    classes: tuple[ClassDef, ...] = ()
    entry: str | None = None

    def cls(self, name: str) -> ClassDef:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    def has_class(self, name: str) -> bool:
        return any(c.name == name for c in self.classes)

    def ancestors(self, name: str) -> list[ClassDef]:
        """``name`` and its superclasses, most derived first."""
        out = []
        cur: str | None = name
        while cur is not None:
            c = self.cls(cur)
            out.append(c)
            cur = c.superclass
        return out

    def subclasses(self, name: str) -> list[ClassDef]:
        """``name`` and every class that inherits from it."""
        return [c for c in self.classes if any(a.name == name for a in self.ancestors(c.name))]

    def all_fields(self, name: str) -> list[tuple[ClassDef, FieldDef]]:
        return [(c, f) for c in reversed(self.ancestors(name)) for f in c.fields]

    def lookup_field(self, cls: str, name: str) -> tuple[ClassDef, FieldDef] | None:
        for c in self.ancestors(cls):
            for f in c.fields:
                if f.name == name:
                    return c, f
        return None

    def lookup_method(self, cls: str, name: str) -> tuple[ClassDef, MethodDef] | None:
        for c in self.ancestors(cls):
            m = c.method(name)
            if m is not None:
                return c, m
        return None

    def field_annotation(self, cls: str, name: str) -> LabelTemplate | None:
        """Nearest embedded annotation for ``name`` along ``cls``'s ancestry."""
        for c in self.ancestors(cls):
            for fname, tmpl in c.annotations:
                if fname == name:
                    return tmpl
        return None

    def is_instrumented_type(self, type_name: str) -> bool:
        return self.has_class(type_name) and self.cls(type_name).instrumented
