"""In-lined reference monitor: shadow slots plus per-instruction label rules.

The pass has two steps. :func:`inject_shadow_fields` adds label slots to
every application class: one for the object, one per field of primitive
or library type, and per method one slot per parameter, one for the return
value and one for the calling context (``pcIn``). :func:`rewrite_method`
then pairs every base instruction with the monitor instructions that
propagate or check labels, and :func:`plan_pc` decides how the context
label is raised at branches and restored where their scope ends.

Label variables are kept in SSA form. A call into instrumented code may
hand back a new label for an argument, which creates a second definition
of that argument's label; those get fresh versions and phi nodes at the
iterated dominance frontier.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir.cfg import Cfg, build_cfg, dominance_frontier, dominates, dominators, post_dominators, scope_opens
from .ir.check import check_program, infer_types
from .ir.nodes import (
    LABEL_PREFIX,
    LABEL_TYPE,
    PC,
    AssertFlow,
    BinOp,
    Block,
    Branch,
    Call,
    ClassDef,
    Const,
    Copy,
    FieldDef,
    Goto,
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
    is_label_name,
    is_monitor,
)
from .lattice import LatticeDef
from .specs import CHECK, ResolvedSpecs

OBJECT_SLOT = LABEL_PREFIX + "this"


class InstrumentError(Exception):
    pass


def field_slot(name: str) -> str:
    return f"{LABEL_PREFIX}{name}"


def param_slot(method: str, i: int) -> str:
    return f"{LABEL_PREFIX}{method}$p{i}"


def ret_slot(method: str) -> str:
    return f"{LABEL_PREFIX}{method}$ret"


def pcin_slot(method: str) -> str:
    return f"{LABEL_PREFIX}{method}$pcIn"


@dataclass(frozen=True)
class ClassLayout:
    cls: str
    object_slot: str | None
    field_slots: tuple[tuple[str, str], ...]
    method_slots: tuple[tuple[str, tuple[str, ...], str, str], ...]

    def slots(self) -> list[str]:
        out = [self.object_slot] if self.object_slot else []
        out += [s for _, s in self.field_slots]
        for _, params, ret, pcin in self.method_slots:
            out += [*params, ret, pcin]
        return out


@dataclass(frozen=True)
class ShadowLayout:
    classes: tuple[ClassLayout, ...] = ()

    def of(self, cls: str) -> ClassLayout | None:
        for c in self.classes:
            if c.cls == cls:
                return c
        return None


def format_manifest(layout: ShadowLayout) -> str:
    lines = []
    for cl in layout.classes:
        lines.append(f"class {cl.cls}")
        if cl.object_slot:
            lines.append(f"  object {cl.object_slot}")
        for f, s in cl.field_slots:
            lines.append(f"  field {f} {s}")
        for m, params, ret, pcin in cl.method_slots:
            for i, s in enumerate(params):
                lines.append(f"  param {m} {i} {s}")
            lines.append(f"  return {m} {ret}")
            lines.append(f"  context {m} {pcin}")
    return "\n".join(lines) + ("\n" if lines else "")


def _check_fresh(p: Program) -> None:
    for c in p.classes:
        for f in c.fields:
            if is_label_name(f.name) or f.type == LABEL_TYPE:
                raise InstrumentError(f"field {c.name}.{f.name} collides with the shadow label namespace")
        if c.annotations:
            raise InstrumentError(f"class {c.name} already carries label annotations")
        for m in c.methods:
            for b in m.blocks:
                if any(is_monitor(i) for i in b.instrs):
                    raise InstrumentError(f"{c.name}.{m.name} is already instrumented")


def inject_shadow_fields(p: Program, specs: ResolvedSpecs | None = None) -> tuple[Program, ShadowLayout]:
    """Add label slots to application classes; library classes are untouched."""
    _check_fresh(p)
    specs = specs or ResolvedSpecs()
    classes, layouts = [], []
    for c in p.classes:
        if not c.instrumented:
            classes.append(c)
            continue
        obj = OBJECT_SLOT if c.superclass is None else None
        fslots = tuple((f.name, field_slot(f.name)) for f in c.fields if not p.is_instrumented_type(f.type))
        mslots = tuple(
            (m.name, tuple(param_slot(m.name, i) for i in range(len(m.params))), ret_slot(m.name), pcin_slot(m.name))
            for m in c.methods
        )
        cl = ClassLayout(c.name, obj, fslots, mslots)
        layouts.append(cl)
        new_fields = c.fields + tuple(FieldDef(s, LABEL_TYPE) for s in cl.slots())
        classes.append(ClassDef(c.name, c.superclass, new_fields, c.methods, True,
                                tuple(specs.annotations_of(c.name))))
    return Program(tuple(classes), p.entry), ShadowLayout(tuple(layouts))


# -- context label planning ---------------------------------------------------


@dataclass(frozen=True)
class PcPlan:
    """How one block handles the context label.

    ``prefix`` is prepended to the block. ``saved`` names the label
    variable that keeps the pre-branch context for blocks ending in a
    branch.
    """

    prefix: tuple = ()
    saved: str | None = None
    closes: str | None = None


def saved_pc_name(block: str) -> str:
    return f"{LABEL_PREFIX}$oldPC${block}"


def plan_pc(m: MethodDef, cfg: Cfg | None = None) -> dict[str, PcPlan]:
    """Per-block context plan.

    A block that is the first to post-dominate a branch ``d`` (and is
    dominated by it) restores the context saved at ``d``; any other merge
    takes the phi of its predecessors' outgoing contexts; single-predecessor
    blocks inherit it unchanged.
    """
    cfg = cfg or build_cfg(m)
    ipdom = post_dominators(cfg)
    idom = dominators(cfg)
    opens = scope_opens(cfg, ipdom, idom)
    plans = {}
    for b in cfg.blocks:
        prefix: tuple = ()
        closes = opens.get(b)
        if closes is not None:
            prefix = (SetPc(saved_pc_name(closes)),)
        elif len(cfg.pred[b]) >= 2:
            prefix = (PhiLabel(PC, tuple((pb, PC) for pb in cfg.pred[b])),)
        saved = saved_pc_name(b) if b in cfg.branches else None
        plans[b] = PcPlan(prefix, saved, closes)
    return plans


# -- method rewriting ---------------------------------------------------------


class _Rewriter:
    def __init__(self, program: Program, cls: ClassDef, m: MethodDef, specs: ResolvedSpecs):
        self.p = program
        self.cls = cls
        self.m = m
        self.specs = specs
        self.cfg = build_cfg(m)
        self.idom = dominators(self.cfg)
        self.plans = plan_pc(m, self.cfg)
        self.types = infer_types(program, cls, m)
        self.annotation = specs.method_annotation(program, cls.name, m.name)
        self.counter = 0
        self.stacks: dict[str, list[str]] = {}
        self.versions: dict[str, int] = {}
        self.out: dict[str, list] = {}
        self._pushed: list[list[str]] = []
        # label phis are emitted as placeholders and filled once every
        # predecessor has been rewritten
        self._phi_slots: dict[str, list] = {}
        self._incoming: dict[str, dict[str, dict]] = {}
        self.children: dict[str, list[str]] = {b: [] for b in self.cfg.blocks}
        for b, d in self.idom.items():
            if b != d:
                self.children[d].append(b)
        self.repair = self._place_repair_phis()
        self.uses_this = self._this_label_needed()

    # naming

    def tmp(self) -> str:
        self.counter += 1
        return f"{LABEL_PREFIX}$t{self.counter}"

    def define(self, var: str) -> str:
        n = self.versions.get(var, 0)
        self.versions[var] = n + 1
        name = f"{LABEL_PREFIX}{var}" if n == 0 else f"{LABEL_PREFIX}{var}$v{n}"
        self.stacks.setdefault(var, []).append(name)
        self._pushed[-1].append(var)
        return name

    def lbl(self, var: str) -> str:
        stack = self.stacks.get(var)
        if not stack:
            raise InstrumentError(f"{self.cls.name}.{self.m.name}: no label for {var}")
        return stack[-1]

    def op_labels(self, *operands) -> list[str]:
        return [self.lbl(o.name) for o in operands if isinstance(o, Var)]

    # analysis

    def _obj_class(self, var: str) -> str:
        return self.types[var]

    def _instrumented_call(self, ins: Call) -> bool:
        return self.p.cls(self._obj_class(ins.obj)).instrumented

    def _this_label_needed(self) -> bool:
        for b in self.m.blocks:
            for ins in b.instrs:
                ops = []
                if isinstance(ins, Copy):
                    ops = [ins.src]
                elif isinstance(ins, Call):
                    ops = [ins.obj] + [a.name for a in ins.args if isinstance(a, Var)]
                elif isinstance(ins, (StoreField, Return)):
                    v = ins.src if isinstance(ins, StoreField) else ins.value
                    ops = [v.name] if isinstance(v, Var) else []
                elif isinstance(ins, BinOp):
                    ops = [o.name for o in (ins.lhs, ins.rhs) if isinstance(o, Var)]
                elif isinstance(ins, Phi):
                    ops = [v for _, v in ins.incoming]
                elif isinstance(ins, LoadField):
                    ops = [ins.obj] if not self.p.cls(self._obj_class(ins.obj)).instrumented else []
                if "this" in ops:
                    return True
        return False

    def _place_repair_phis(self) -> dict[str, list[str]]:
        """Blocks needing a label phi for arguments relabelled by calls."""
        entry = self.cfg.entry
        defblock: dict[str, str] = {"this": entry}
        defblock.update({n: entry for n in self.m.param_names})
        writeback: dict[str, set[str]] = {}
        for b in self.m.blocks:
            for ins in b.instrs:
                if getattr(ins, "dst", None) is not None:
                    defblock[ins.dst] = b.label
                if isinstance(ins, Call) and self._instrumented_call(ins):
                    for a in ins.args:
                        if isinstance(a, Var):
                            writeback.setdefault(a.name, set()).add(b.label)
        df = dominance_frontier(self.cfg, self.idom)
        out: dict[str, list[str]] = {b: [] for b in self.cfg.blocks}
        for var in sorted(writeback):
            home = defblock[var]
            work = list(writeback[var] | {home})
            placed: set[str] = set()
            while work:
                x = work.pop()
                for y in df[x]:
                    if y in placed or y == home or not dominates(self.idom, home, y):
                        continue
                    placed.add(y)
                    out[y].append(var)
                    work.append(y)
        return out

    # driver

    def run(self) -> MethodDef:
        self._walk(self.cfg.entry)
        for label, slots in self._phi_slots.items():
            incoming = self._incoming.get(label, {})
            preds = self.cfg.pred[label]
            for idx, name, what in slots:
                key = ("phi", what.dst) if isinstance(what, Phi) else what
                self.out[label][idx] = PhiLabel(name, tuple((pb, incoming[pb][key]) for pb in preds))
        blocks = tuple(Block(b.label, tuple(self.out[b.label])) for b in self.m.blocks)
        return MethodDef(self.m.name, self.m.params, self.m.return_type, blocks)

    def _walk(self, start: str) -> None:
        # iterative dominator-tree walk keeping rename stacks scoped to subtrees
        stack = [(start, False)]
        while stack:
            b, done = stack.pop()
            if done:
                for var in self._pushed.pop():
                    self.stacks[var].pop()
                continue
            self._pushed.append([])
            self._rewrite_block(b)
            stack.append((b, True))
            for child in reversed(self.children[b]):
                stack.append((child, False))

    def _rewrite_block(self, label: str) -> None:
        block = self.m.block(label)
        plan = self.plans[label]
        out: list = list(plan.prefix)
        self.out[label] = out
        if label == self.cfg.entry:
            out += self._prologue()
        phi_slots = []
        for var in self.repair[label]:
            name = self.define(var)
            out.append(None)
            phi_slots.append((len(out) - 1, name, var))
        for ins in block.instrs:
            if isinstance(ins, Phi):
                out.append(ins)
                name = self.define(ins.dst)
                out.append(None)
                phi_slots.append((len(out) - 1, name, ins))
            else:
                out += self._rewrite(ins, plan)
        self._phi_slots[label] = phi_slots
        # fill successors' label phis from this block's current versions
        for succ in self.cfg.succ[label]:
            self._incoming.setdefault(succ, {})[label] = {}
            for var in self.repair[succ]:
                self._incoming[succ][label][var] = self.lbl(var)
            for ins in self.m.block(succ).instrs:
                if isinstance(ins, Phi):
                    for pred, v in ins.incoming:
                        if pred == label:
                            self._incoming[succ][label][("phi", ins.dst)] = self.lbl(v)

    def _prologue(self) -> list:
        out: list = []
        ann = self.annotation
        g = self.m.name
        checks = []
        for i, pname in enumerate(self.m.param_names):
            contract = ann.param(pname).contract if ann and ann.param(pname) else None
            if contract is not None and contract.modifier != CHECK:
                out.append(InstantiateTemplate(self.define(pname), template=contract.template))
                continue
            name = self.define(pname)
            out.append(LoadLabel(name, "this", param_slot(g, i)))
            if contract is not None:
                checks.append((name, pname, contract))
        if self.uses_this:
            out.append(LoadLabel(self.define("this"), "this", OBJECT_SLOT))
        pcin = f"{LABEL_PREFIX}$pcIn"
        out.append(LoadLabel(pcin, "this", pcin_slot(g)))
        out.append(SetPc(pcin))
        for name, pname, contract in checks:
            bound = self.tmp()
            out.append(InstantiateTemplate(bound, template=contract.template))
            out.append(AssertFlow(name, bound, f"parameter {pname} of {self.cls.name}.{g} exceeds {contract}"))
        return out

    def _rewrite(self, ins, plan: PcPlan) -> list:
        out: list = []
        if isinstance(ins, Const):
            out += [ins, JoinInto(self.define(ins.dst), (PC,))]
        elif isinstance(ins, Copy):
            out += [ins, JoinInto(self.define(ins.dst), (self.lbl(ins.src), PC))]
        elif isinstance(ins, BinOp):
            out += [ins, JoinInto(self.define(ins.dst), (*self.op_labels(ins.lhs, ins.rhs), PC))]
        elif isinstance(ins, New):
            out.append(ins)
            name = self.define(ins.dst)
            out.append(JoinInto(name, (PC,)))
            if self.p.cls(ins.cls).instrumented:
                out.append(StoreLabel(ins.dst, OBJECT_SLOT, name))
        elif isinstance(ins, LoadField):
            out += self._load_field(ins)
        elif isinstance(ins, StoreField):
            out += self._store_field(ins)
        elif isinstance(ins, Call):
            out += self._call(ins)
        elif isinstance(ins, Branch):
            raised = self.tmp()
            out += [
                JoinInto(raised, (PC, self.lbl(ins.cond))),
                SavePc(plan.saved),
                SetPc(raised),
                ins,
            ]
        elif isinstance(ins, Goto):
            out.append(ins)
        elif isinstance(ins, Return):
            out += self._return(ins)
        else:
            raise InstrumentError(f"no rewrite rule for {ins!r}")
        return out

    def _load_field(self, ins: LoadField) -> list:
        cls = self._obj_class(ins.obj)
        if not self.p.cls(cls).instrumented:
            return [ins, JoinInto(self.define(ins.dst), (self.lbl(ins.obj), PC))]
        ftype = self.p.lookup_field(cls, ins.field)[1].type
        src = self.tmp()
        if self.specs.field_specified(self.p, cls, ins.field):
            get = InstantiateTemplate(src, obj=ins.obj, field=ins.field)
        elif self.p.is_instrumented_type(ftype):
            get = LoadLabel(src, ins.dst, OBJECT_SLOT)
        else:
            get = LoadLabel(src, ins.obj, field_slot(ins.field))
        return [ins, get, JoinInto(self.define(ins.dst), (src, PC))]

    def _store_field(self, ins: StoreField) -> list:
        cls = self._obj_class(ins.obj)
        where = f"{cls}.{ins.field}"
        incoming = self.tmp()
        out: list = [JoinInto(incoming, (*self.op_labels(ins.src), PC))]
        if not self.p.cls(cls).instrumented:
            out.append(AssertFlow(incoming, self.lbl(ins.obj), f"store into library object field {where}"))
            return out + [ins]
        ftype = self.p.lookup_field(cls, ins.field)[1].type
        if self.specs.field_specified(self.p, cls, ins.field):
            bound = self.tmp()
            return out + [
                InstantiateTemplate(bound, obj=ins.obj, field=ins.field),
                AssertFlow(incoming, bound, f"value stored into {where} exceeds its label"),
                ins,
            ]
        if self.p.is_instrumented_type(ftype):
            if not isinstance(ins.src, Var):
                return out + [ins]
            holder, slot = ins.src.name, OBJECT_SLOT
        else:
            holder, slot = ins.obj, field_slot(ins.field)
        old, new = self.tmp(), self.tmp()
        return out + [
            ins,
            LoadLabel(old, holder, slot),
            JoinInto(new, (old, incoming)),
            StoreLabel(holder, slot, new),
        ]

    def _call(self, ins: Call) -> list:
        if not self._instrumented_call(ins):
            return [ins, JoinInto(self.define(ins.dst), (self.lbl(ins.obj), *self.op_labels(*ins.args), PC))]
        out: list = []
        for i, a in enumerate(ins.args):
            t = self.tmp()
            out += [JoinInto(t, (*self.op_labels(a), PC)), StoreLabel(ins.obj, param_slot(ins.method, i), t)]
        ctx = self.tmp()
        out += [JoinInto(ctx, (PC, self.lbl(ins.obj))), StoreLabel(ins.obj, pcin_slot(ins.method), ctx)]
        out.append(ins)
        for i, a in enumerate(ins.args):
            if isinstance(a, Var):
                out.append(LoadLabel(self.define(a.name), ins.obj, param_slot(ins.method, i)))
        out.append(LoadLabel(self.define(ins.dst), ins.obj, ret_slot(ins.method)))
        return out

    def _return(self, ins: Return) -> list:
        g = self.m.name
        ann = self.annotation
        out: list = []
        value = self.tmp()
        out.append(JoinInto(value, (*self.op_labels(ins.value), PC)))
        contract = ann.returns if ann else None
        if contract is not None:
            tmpl = self.tmp()
            out.append(InstantiateTemplate(tmpl, template=contract.template))
            if contract.modifier == CHECK:
                out.append(AssertFlow(value, tmpl, f"return value of {self.cls.name}.{g} exceeds {contract}"))
            else:
                value = tmpl
        out.append(StoreLabel("this", ret_slot(g), value))
        for i, pname in enumerate(self.m.param_names):
            out.append(StoreLabel("this", param_slot(g, i), self.lbl(pname)))
        out.append(ins)
        return out


def rewrite_method(program: Program, cls: ClassDef, m: MethodDef, specs: ResolvedSpecs | None = None) -> MethodDef:
    """Instrument one method of an application class.

    ``program`` supplies class and field types; the shadow slots it names
    are those created by :func:`inject_shadow_fields`.
    """
    return _Rewriter(program, cls, m, specs or ResolvedSpecs()).run()


def instrument_program(p: Program, specs: ResolvedSpecs | None = None, lat: LatticeDef | None = None,
                       check: bool = True) -> tuple[Program, ShadowLayout]:
    """Inject shadow slots and rewrite every method of every application class."""
    specs = specs or ResolvedSpecs()
    injected, layout = inject_shadow_fields(p, specs)
    classes = []
    for c in injected.classes:
        if not c.instrumented:
            classes.append(c)
            continue
        methods = tuple(rewrite_method(injected, c, m, specs) for m in c.methods)
        classes.append(ClassDef(c.name, c.superclass, c.fields, methods, True, c.annotations))
    out = Program(tuple(classes), p.entry)
    if check:
        check_program(out)
    return out, layout


def erase(p: Program) -> Program:
    """Drop every shadow slot, annotation and monitor instruction."""
    classes = []
    for c in p.classes:
        fields = tuple(f for f in c.fields if f.type != LABEL_TYPE)
        methods = tuple(
            MethodDef(m.name, m.params, m.return_type,
                      tuple(Block(b.label, tuple(i for i in b.instrs if not is_monitor(i))) for b in m.blocks))
            for m in c.methods
        )
        classes.append(ClassDef(c.name, c.superclass, fields, methods, c.instrumented))
    return Program(tuple(classes), p.entry)
