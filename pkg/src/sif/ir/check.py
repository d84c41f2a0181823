"""Semantic validation of SIF-IR programs.

Checks class structure, types of field/method references (through a small
type inference over SSA variables), control flow and SSA form. Monitor
instructions are validated too, so instrumented output passes the same
checker: label variables form their own SSA namespace.
"""

from __future__ import annotations

import re

from .cfg import CfgError, build_cfg, dominates, dominators, post_dominators, reachable
from .nodes import (
    LABEL_TYPE,
    PC,
    PRIMITIVE_TYPES,
    VOID,
    AssertFlow,
    BinOp,
    Branch,
    Call,
    ClassDef,
    Const,
    Copy,
    InstantiateTemplate,
    JoinInto,
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
    TERMINATORS,
    is_label_name,
)

_PLAIN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
NUMERIC = frozenset({"int", "long", "double"})


class IRError(Exception):
    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def _plain(name: str, what: str, where: str) -> None:
    if not _PLAIN.match(name):
        raise IRError(f"{what} {name!r} must not contain '$'", where)


def _known_type(p: Program, t: str) -> bool:
    return t in PRIMITIVE_TYPES or p.has_class(t)


def check_classes(p: Program) -> None:
    names = [c.name for c in p.classes]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise IRError(f"duplicate class {sorted(dup)[0]}")
    for c in p.classes:
        _plain(c.name, "class name", c.name)
        if c.superclass is not None:
            if not p.has_class(c.superclass):
                raise IRError(f"unknown superclass {c.superclass}", c.name)
            seen, cur = {c.name}, c.superclass
            while cur is not None:
                if cur in seen:
                    raise IRError("cyclic inheritance", c.name)
                seen.add(cur)
                cur = p.cls(cur).superclass
            if p.cls(c.superclass).instrumented != c.instrumented:
                raise IRError("library and application classes cannot inherit from each other", c.name)
    for c in p.classes:
        fnames = [f.name for _, f in p.all_fields(c.name)]
        for f in c.fields:
            where = f"{c.name}.{f.name}"
            if fnames.count(f.name) > 1:
                raise IRError("duplicate field", where)
            if f.type == LABEL_TYPE:
                if not is_label_name(f.name):
                    raise IRError("label-typed fields must be secLbl$ slots", where)
            elif not _known_type(p, f.type):
                raise IRError(f"unknown type {f.type}", where)
            if not is_label_name(f.name):
                _plain(f.name, "field name", where)
        mnames = [m.name for a in p.ancestors(c.name) for m in a.methods]
        for m in c.methods:
            where = f"{c.name}.{m.name}"
            _plain(m.name, "method name", where)
            if mnames.count(m.name) > 1:
                raise IRError("duplicate method (overriding is not supported)", where)
            if m.return_type != VOID and not _known_type(p, m.return_type):
                raise IRError(f"unknown type {m.return_type}", where)
            pnames = m.param_names
            for pname, ptype in m.params:
                _plain(pname, "parameter", where)
                if pnames.count(pname) > 1:
                    raise IRError(f"duplicate parameter {pname}", where)
                if not _known_type(p, ptype):
                    raise IRError(f"unknown type {ptype}", where)
        for fname, _ in c.annotations:
            if p.lookup_field(c.name, fname) is None:
                raise IRError(f"annotation on unknown field {fname}", c.name)
    if p.entry is not None:
        cls, _, meth = p.entry.partition(".")
        if not p.has_class(cls) or p.lookup_method(cls, meth) is None:
            raise IRError(f"entry {p.entry} does not resolve")


def _binop_type(op: str, lt: str | None, rt: str | None) -> str:
    if op == "concat":
        return "string"
    if op in ("eq", "lt", "gt", "and", "or"):
        return "bool"
    if "double" in (lt, rt):
        return "double"
    return "long"


def _lit_type(lit: Lit) -> str:
    return {"null": "null", "bool": "bool", "int": "long", "float": "double", "str": "string"}[lit.kind]


def infer_types(p: Program, cls: ClassDef, m: MethodDef) -> dict[str, str]:
    """Static types of the method's SSA variables (``this`` and parameters included)."""
    types: dict[str, str] = {"this": cls.name}
    types.update({n: t for n, t in m.params})
    where = f"{cls.name}.{m.name}"

    def op_type(op):
        return _lit_type(op) if isinstance(op, Lit) else types.get(op.name)

    def obj_class(name: str, ins) -> str | None:
        t = types.get(name)
        if t is None:
            return None
        if not p.has_class(t):
            raise IRError(f"{name} has type {t}, not an object, in '{ins}'", where)
        return t

    changed = True
    while changed:
        changed = False
        for b in m.blocks:
            for ins in b.instrs:
                dst, t = getattr(ins, "dst", None), None
                if isinstance(ins, Const):
                    t = _lit_type(ins.value)
                elif isinstance(ins, Copy):
                    t = types.get(ins.src)
                elif isinstance(ins, LoadField):
                    c = obj_class(ins.obj, ins)
                    if c is not None:
                        hit = p.lookup_field(c, ins.field)
                        if hit is None:
                            raise IRError(f"unknown field {c}.{ins.field}", where)
                        t = hit[1].type
                elif isinstance(ins, New):
                    if not p.has_class(ins.cls):
                        raise IRError(f"unknown class {ins.cls}", where)
                    t = ins.cls
                elif isinstance(ins, Call):
                    c = obj_class(ins.obj, ins)
                    if c is not None:
                        hit = p.lookup_method(c, ins.method)
                        if hit is None:
                            raise IRError(f"unknown method {c}.{ins.method}", where)
                        if len(hit[1].params) != len(ins.args):
                            raise IRError(f"{c}.{ins.method} expects {len(hit[1].params)} arguments", where)
                        t = hit[1].return_type
                elif isinstance(ins, BinOp):
                    t = _binop_type(ins.op, op_type(ins.lhs), op_type(ins.rhs))
                elif isinstance(ins, Phi):
                    known = [types[v] for _, v in ins.incoming if types.get(v) not in (None, "null")]
                    t = known[0] if known else ("null" if any(types.get(v) for _, v in ins.incoming) else None)
                if dst is not None and t is not None and not is_label_name(dst) and types.get(dst) != t:
                    if dst in types and types[dst] != "null":
                        continue
                    types[dst] = t
                    changed = True
    return types


def _check_types(p: Program, cls: ClassDef, m: MethodDef, types: dict[str, str]) -> None:
    where = f"{cls.name}.{m.name}"

    def need_obj(name: str, ins) -> str:
        t = types.get(name)
        if t is None or not p.has_class(t):
            raise IRError(f"receiver {name} of '{ins}' is not an object (type {t})", where)
        return t

    for b in m.blocks:
        for ins in b.instrs:
            if isinstance(ins, StoreField):
                c = need_obj(ins.obj, ins)
                hit = p.lookup_field(c, ins.field)
                if hit is None:
                    raise IRError(f"unknown field {c}.{ins.field}", where)
            elif isinstance(ins, (LoadField, Call)):
                need_obj(ins.obj, ins)
            elif isinstance(ins, (LoadLabel, StoreLabel)):
                t = types.get(ins.obj)
                if t is not None and p.has_class(t):
                    hit = p.lookup_field(t, ins.slot)
                    if hit is None or hit[1].type != LABEL_TYPE:
                        raise IRError(f"unknown label slot {t}.{ins.slot}", where)
                elif t != "null":
                    raise IRError(f"label slot access on non-object {ins.obj}", where)
            elif isinstance(ins, InstantiateTemplate) and ins.obj is not None:
                c = need_obj(ins.obj, ins)
                if p.lookup_field(c, ins.field) is None:
                    raise IRError(f"unknown field {c}.{ins.field}", where)


def _defs_uses(ins):
    """(program defs, program uses, label defs, label uses) of one instruction."""
    pd, pu, ld, lu = [], [], [], []

    def ops(*operands):
        for o in operands:
            if isinstance(o, Var):
                pu.append(o.name)

    if isinstance(ins, Const):
        pd.append(ins.dst)
    elif isinstance(ins, Copy):
        pd.append(ins.dst)
        pu.append(ins.src)
    elif isinstance(ins, LoadField):
        pd.append(ins.dst)
        pu.append(ins.obj)
    elif isinstance(ins, StoreField):
        pu.append(ins.obj)
        ops(ins.src)
    elif isinstance(ins, New):
        pd.append(ins.dst)
    elif isinstance(ins, Call):
        pd.append(ins.dst)
        pu.append(ins.obj)
        ops(*ins.args)
    elif isinstance(ins, BinOp):
        pd.append(ins.dst)
        ops(ins.lhs, ins.rhs)
    elif isinstance(ins, Phi):
        pd.append(ins.dst)
    elif isinstance(ins, Branch):
        pu.append(ins.cond)
    elif isinstance(ins, Return):
        ops(ins.value)
    elif isinstance(ins, JoinInto):
        ld.append(ins.dst)
        lu += [o for o in ins.operands if isinstance(o, str)]
    elif isinstance(ins, LoadLabel):
        ld.append(ins.dst)
        pu.append(ins.obj)
    elif isinstance(ins, StoreLabel):
        pu.append(ins.obj)
        lu.append(ins.src)
    elif isinstance(ins, AssertFlow):
        lu += [ins.value, ins.bound]
    elif isinstance(ins, SetPc):
        lu.append(ins.src)
    elif isinstance(ins, SavePc):
        ld.append(ins.dst)
    elif isinstance(ins, PhiLabel):
        if ins.dst != PC:
            ld.append(ins.dst)
    elif isinstance(ins, InstantiateTemplate):
        ld.append(ins.dst)
        if ins.obj is not None:
            pu.append(ins.obj)
        else:
            pu += [d.names[0] for d in ins.template.dependencies()]
    return pd, pu, ld, [u for u in lu if u != PC]


def check_method(p: Program, cls: ClassDef, m: MethodDef) -> None:
    where = f"{cls.name}.{m.name}"
    labels = [b.label for b in m.blocks]
    if len(set(labels)) != len(labels):
        raise IRError("duplicate block label", where)
    known = set(labels)
    for b in m.blocks:
        for ins in b.instrs[:-1]:
            if isinstance(ins, TERMINATORS):
                raise IRError(f"terminator in the middle of block {b.label}", where)
        t = b.terminator
        target = getattr(t, "target", None)
        if target is not None and target not in known:
            raise IRError(f"unknown block {target}", where)
        if target == labels[0]:
            raise IRError("the entry block cannot be a jump target", where)
    try:
        cfg = build_cfg(m)
    except CfgError as exc:
        raise IRError(str(exc), where) from None
    live = reachable(cfg)
    dead = [b for b in labels if b not in live]
    if dead:
        raise IRError(f"unreachable block {dead[0]}", where)
    try:
        post_dominators(cfg)
    except CfgError as exc:
        raise IRError(str(exc), where) from None
    idom = dominators(cfg)

    # SSA: one definition per name, in each namespace
    pdefs: dict[str, tuple[str, int]] = {"this": (labels[0], -1)}
    for n in m.param_names:
        pdefs[n] = (labels[0], -1)
    ldefs: dict[str, tuple[str, int]] = {}
    for b in m.blocks:
        seen_body = False
        for i, ins in enumerate(b.instrs):
            if isinstance(ins, (Phi, PhiLabel)):
                if seen_body:
                    raise IRError(f"phi after other instructions in block {b.label}", where)
                preds = set(cfg.pred[b.label])
                got = [blk for blk, _ in ins.incoming]
                if set(got) != preds or len(got) != len(preds):
                    raise IRError(
                        f"phi for {ins.dst} in {b.label} must name each predecessor "
                        f"({', '.join(cfg.pred[b.label])}) exactly once", where)
            elif not isinstance(ins, SetPc):
                seen_body = True
            pd, _, ld, _ = _defs_uses(ins)
            for d in pd:
                if is_label_name(d):
                    raise IRError(f"program variable {d!r} uses the label namespace", where)
                _plain(d, "variable", where)
                if d in pdefs:
                    raise IRError(f"variable {d} assigned more than once (SSA)", where)
                pdefs[d] = (b.label, i)
            for d in ld:
                if d in ldefs:
                    raise IRError(f"label variable {d} assigned more than once (SSA)", where)
                ldefs[d] = (b.label, i)

    def check_use(name: str, defs, blk: str, idx: int, ins) -> None:
        if name not in defs:
            raise IRError(f"'{ins}' uses undefined {name}", where)
        dblk, didx = defs[name]
        ok = (didx < idx) if dblk == blk else dominates(idom, dblk, blk)
        if not ok:
            raise IRError(f"definition of {name} does not dominate its use in '{ins}'", where)

    for b in m.blocks:
        for i, ins in enumerate(b.instrs):
            if isinstance(ins, (Phi, PhiLabel)):
                defs = pdefs if isinstance(ins, Phi) else ldefs
                for pred, v in ins.incoming:
                    if v == PC:
                        continue
                    check_use(v, defs, pred, len(m.block(pred).instrs), ins)
                continue
            _, pu, _, lu = _defs_uses(ins)
            for u in pu:
                check_use(u, pdefs, b.label, i, ins)
            for u in lu:
                check_use(u, ldefs, b.label, i, ins)

    types = infer_types(p, cls, m)
    _check_types(p, cls, m, types)


def check_program(p: Program) -> None:
    check_classes(p)
    for c in p.classes:
        for m in c.methods:
            check_method(p, c, m)
