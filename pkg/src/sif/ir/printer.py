"""Canonical SIF-IR text output; ``parse_program(print_program(p)) == p``."""

from __future__ import annotations

import json

from ..lattice import Label
from .nodes import (
    AssertFlow,
    BinOp,
    Branch,
    Call,
    ClassDef,
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


def format_operand(op) -> str:
    if isinstance(op, Var):
        return op.name
    if isinstance(op, Lit):
        v = op.value
        if v is None:
            return "null"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        return repr(v)
    raise TypeError(op)


def _label_op(op) -> str:
    return f"<{op}>" if isinstance(op, Label) else op


def _incoming(pairs) -> str:
    return "[" + ", ".join(f"{b}: {v}" for b, v in pairs) + "]"


def format_instr(ins) -> str:
    if isinstance(ins, Const):
        return f"{ins.dst} = {format_operand(ins.value)}"
    if isinstance(ins, Copy):
        return f"{ins.dst} = {ins.src}"
    if isinstance(ins, LoadField):
        return f"{ins.dst} = {ins.obj}.{ins.field}"
    if isinstance(ins, StoreField):
        return f"{ins.obj}.{ins.field} = {format_operand(ins.src)}"
    if isinstance(ins, New):
        return f"{ins.dst} = new {ins.cls}"
    if isinstance(ins, Call):
        args = ", ".join(format_operand(a) for a in ins.args)
        return f"{ins.dst} = call {ins.obj}.{ins.method}({args})"
    if isinstance(ins, BinOp):
        return f"{ins.dst} = {ins.op}({format_operand(ins.lhs)}, {format_operand(ins.rhs)})"
    if isinstance(ins, (Phi, PhiLabel)):
        return f"{ins.dst} = phi {_incoming(ins.incoming)}"
    if isinstance(ins, Branch):
        return f"if {ins.cond} goto {ins.target}"
    if isinstance(ins, Goto):
        return f"goto {ins.target}"
    if isinstance(ins, Return):
        return f"return {format_operand(ins.value)}"
    if isinstance(ins, JoinInto):
        return f"{ins.dst} = join({', '.join(_label_op(o) for o in ins.operands)})"
    if isinstance(ins, LoadLabel):
        return f"{ins.dst} = {ins.obj}.{ins.slot}"
    if isinstance(ins, StoreLabel):
        return f"{ins.obj}.{ins.slot} = {ins.src}"
    if isinstance(ins, AssertFlow):
        tail = f" {json.dumps(ins.reason)}" if ins.reason else ""
        return f"assert {ins.value} <= {ins.bound}{tail}"
    if isinstance(ins, SetPc):
        return f"setpc {ins.src}"
    if isinstance(ins, SavePc):
        return f"{ins.dst} = savepc"
    if isinstance(ins, InstantiateTemplate):
        if ins.template is not None:
            return f"{ins.dst} = instantiate {ins.template}"
        return f"{ins.dst} = instantiate {ins.obj}.{ins.field}"
    if isinstance(ins, LeakHalt):
        return f"leak {json.dumps(ins.reason)}"
    raise TypeError(f"unknown instruction {ins!r}")


def format_method(m: MethodDef, indent: str = "  ") -> list[str]:
    params = ", ".join(f"{t} {n}" for n, t in m.params)
    lines = [f"{indent}{m.return_type} {m.name}({params}) {{"]
    for b in m.blocks:
        lines.append(f"{indent}{b.label}:")
        lines += [f"{indent}  {format_instr(i)}" for i in b.instrs]
    lines.append(f"{indent}}}")
    return lines


def format_class(c: ClassDef) -> list[str]:
    head = ("" if c.instrumented else "library ") + f"class {c.name}"
    if c.superclass:
        head += f" extends {c.superclass}"
    lines = [head + " {"]
    lines += [f"  {f.type} {f.name};" for f in c.fields]
    lines += [f"  spec {name}: {tmpl};" for name, tmpl in c.annotations]
    for m in c.methods:
        lines += format_method(m)
    lines.append("}")
    return lines


def print_program(p: Program) -> str:
    chunks = []
    if p.entry:
        cls, meth = p.entry.split(".", 1)
        chunks.append(f"entry {cls}.{meth}\n")
    for c in p.classes:
        chunks.append("\n".join(format_class(c)) + "\n")
    return "\n".join(chunks)
