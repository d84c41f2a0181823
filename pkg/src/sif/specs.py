"""Security specification files for boundary classes.

A specification fixes the label of selected fields (as an upper bound that
writes must respect) and attaches ``?`` (check) or ``!`` (set) contracts to
method parameters and return values::

    class Associate extends Employee {
        double:AssociateSL(id) salary;
        Supervisor:SupervisorSL(_) supervisor;
    }
    class EmployeeInfoDispatcher {
        String:?AssociateSL(requesterId) associateDispatch(long requesterId, long queriedId);
    }
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir.nodes import LABEL_TYPE, Program
from .ir.parser import parse_template
from .lattice import BUILTINS, FieldPath, LabelTemplate, LatticeDef
from .lexer import TokenStream

CHECK = "?"
SET = "!"

_TYPE_ALIASES = {
    "String": "string",
    "Long": "long",
    "Integer": "int",
    "Double": "double",
    "Boolean": "bool",
    "boolean": "bool",
}


class SpecError(Exception):
    pass


@dataclass(frozen=True)
class Contract:
    modifier: str
    template: LabelTemplate

    def __str__(self) -> str:
        return f"{self.modifier}{self.template}"


@dataclass(frozen=True)
class FieldAnnotation:
    name: str
    type: str
    template: LabelTemplate


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    contract: Contract | None = None


@dataclass(frozen=True)
class MethodAnnotation:
    name: str
    return_type: str
    returns: Contract | None = None
    params: tuple[ParamSpec, ...] = ()

    def param(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class ClassSpec:
    name: str
    superclass: str | None = None
    abstract: bool = False
    fields: tuple[FieldAnnotation, ...] = ()
    methods: tuple[MethodAnnotation, ...] = ()


# -- reading ----------------------------------------------------------------


def _contract(ts: TokenStream) -> Contract:
    tok = ts.peek()
    if not (ts.at(CHECK) or ts.at(SET)):
        raise ts.error(f"expected '?' or '!' before label, got {tok.text!r}")
    ts.next()
    return Contract(tok.text, parse_template(ts))


def _class_spec(ts: TokenStream) -> ClassSpec:
    abstract = ts.accept("abstract")
    ts.expect("class")
    name = ts.ident("class name").text
    sup = ts.ident("class name").text if ts.accept("extends") else None
    ts.expect("{")
    fields, methods = [], []
    while not ts.accept("}"):
        type_tok = ts.ident("type")
        if ts.accept(":"):
            if ts.at(CHECK) or ts.at(SET):
                ret = _contract(ts)
                member = ts.ident("method name").text
                if not ts.at("("):
                    raise ts.error("field annotations take a label without '?' or '!'")
                methods.append(_method_rest(ts, type_tok.text, member, ret))
                continue
            tmpl = parse_template(ts)
            member = ts.ident("field name").text
            ts.expect(";")
            fields.append(FieldAnnotation(member, type_tok.text, tmpl))
            continue
        member = ts.ident("member name").text
        if not ts.at("("):
            raise ts.error(f"field {member} needs a label annotation")
        methods.append(_method_rest(ts, type_tok.text, member, None))
    return ClassSpec(name, sup, abstract, tuple(fields), tuple(methods))


def _method_rest(ts: TokenStream, rtype: str, name: str, ret: Contract | None) -> MethodAnnotation:
    ts.expect("(")
    params = []
    if not ts.at(")"):
        while True:
            ptype = ts.ident("parameter type").text
            contract = _contract(ts) if ts.accept(":") else None
            params.append(ParamSpec(ts.ident("parameter name").text, ptype, contract))
            if not ts.accept(","):
                break
    ts.expect(")")
    ts.expect(";")
    return MethodAnnotation(name, rtype, ret, tuple(params))


def parse_specs(text: str, source: str | None = None) -> list[ClassSpec]:
    """Parse a specification file; names are resolved later by :func:`resolve_specs`."""
    ts = TokenStream(text, source)
    out = []
    while ts.peek().kind != "eof":
        out.append(_class_spec(ts))
    return out


def print_specs(specs: list[ClassSpec]) -> str:
    chunks = []
    for cs in specs:
        head = ("abstract " if cs.abstract else "") + f"class {cs.name}"
        if cs.superclass:
            head += f" extends {cs.superclass}"
        lines = [head + " {"]
        lines += [f"    {f.type}:{f.template} {f.name};" for f in cs.fields]
        for m in cs.methods:
            ret = f":{m.returns}" if m.returns else ""
            params = ", ".join(
                f"{p.type}{':' + str(p.contract) if p.contract else ''} {p.name}" for p in m.params
            )
            lines.append(f"    {m.return_type}{ret} {m.name}({params});")
        lines.append("}")
        chunks.append("\n".join(lines) + "\n")
    return "\n".join(chunks)


# -- resolution ---------------------------------------------------------------


@dataclass(frozen=True)
class ResolvedSpecs:
    """Specifications checked against a program and a lattice."""

    fields: dict[tuple[str, str], LabelTemplate] = field(default_factory=dict)
    methods: dict[tuple[str, str], MethodAnnotation] = field(default_factory=dict)
    abstract: frozenset[str] = frozenset()

    def annotations_of(self, cls: str) -> list[tuple[str, LabelTemplate]]:
        return sorted((f, t) for (c, f), t in self.fields.items() if c == cls)

    def field_template(self, program: Program, cls: str, name: str) -> LabelTemplate | None:
        for c in program.ancestors(cls):
            if (c.name, name) in self.fields:
                return self.fields[(c.name, name)]
        return None

    def field_specified(self, program: Program, static_cls: str, name: str) -> bool:
        """True if ``name`` is annotated anywhere a ``static_cls`` receiver can reach."""
        family = {c.name for c in program.ancestors(static_cls)}
        family |= {c.name for c in program.subclasses(static_cls)}
        return any((c, name) in self.fields for c in family)

    def method_annotation(self, program: Program, cls: str, name: str) -> MethodAnnotation | None:
        for c in program.ancestors(cls):
            if (c.name, name) in self.methods:
                return self.methods[(c.name, name)]
        return None


def _norm_type(t: str) -> str:
    t = _TYPE_ALIASES.get(t, t)
    return "long" if t == "int" else t


def _check_template(tmpl: LabelTemplate, lat: LatticeDef, scope: dict[str, str], where: str,
                    scope_kind: str) -> None:
    if tmpl.head in BUILTINS or tmpl.head in lat.bases:
        if tmpl.args is not None:
            raise SpecError(f"{where}: label {tmpl.head} takes no parameters")
        return
    arity = lat.arity
    if tmpl.head not in arity:
        raise SpecError(f"{where}: unknown label or family {tmpl.head}")
    n = len(tmpl.args or ())
    if n != arity[tmpl.head]:
        raise SpecError(f"{where}: arity mismatch, {tmpl.head} takes {arity[tmpl.head]} parameters, got {n}")
    for arg in tmpl.args:
        if not isinstance(arg, FieldPath):
            continue
        names = arg.names[1:] if arg.names[0] == "this" and scope_kind == "field" else arg.names
        if len(names) != 1:
            raise SpecError(f"{where}: dependency {arg} must belong to the same object")
        if names[0] not in scope:
            raise SpecError(f"{where}: dependency {arg} is not a {scope_kind} in scope")
        if scope[names[0]] in ("double", LABEL_TYPE):
            raise SpecError(f"{where}: dependency {arg} has unsupported type {scope[names[0]]}")


def _strip_this(tmpl: LabelTemplate) -> LabelTemplate:
    if tmpl.args is None:
        return tmpl
    args = tuple(
        FieldPath(a.names[1:]) if isinstance(a, FieldPath) and a.names[0] == "this" and len(a.names) > 1 else a
        for a in tmpl.args
    )
    return LabelTemplate(tmpl.head, args)


def resolve_specs(specs: list[ClassSpec], program: Program, lat: LatticeDef) -> ResolvedSpecs:
    """Check every spec against ``program`` and ``lat``.

    Raises :class:`SpecError` for unknown classes, fields, methods or
    labels, arity mismatches and dependencies on other objects.
    """
    fields: dict[tuple[str, str], LabelTemplate] = {}
    methods: dict[tuple[str, str], MethodAnnotation] = {}
    abstract = set()
    seen = set()
    for cs in specs:
        if cs.name in seen:
            raise SpecError(f"class {cs.name} specified twice")
        seen.add(cs.name)
        if not program.has_class(cs.name):
            raise SpecError(f"unknown class {cs.name}")
        cdef = program.cls(cs.name)
        if not cdef.instrumented:
            raise SpecError(f"library class {cs.name} cannot carry a specification")
        if cs.superclass is not None and cs.superclass != cdef.superclass:
            raise SpecError(f"class {cs.name} does not extend {cs.superclass}")
        if cs.abstract:
            abstract.add(cs.name)
        scope = {f.name: f.type for _, f in program.all_fields(cs.name)}
        names = [f.name for f in cs.fields]
        for fa in cs.fields:
            where = f"{cs.name}.{fa.name}"
            if names.count(fa.name) > 1:
                raise SpecError(f"{where}: annotated twice")
            if fa.name not in scope:
                raise SpecError(f"{where}: unknown field {fa.name}")
            if _norm_type(fa.type) != _norm_type(scope[fa.name]):
                raise SpecError(f"{where}: type {fa.type} does not match field type {scope[fa.name]}")
            _check_template(fa.template, lat, scope, where, "field")
            fields[(cs.name, fa.name)] = _strip_this(fa.template)
        for ma in cs.methods:
            where = f"{cs.name}.{ma.name}"
            own = cdef.method(ma.name)
            if own is None:
                raise SpecError(f"{where}: unknown method {ma.name}")
            if (cs.name, ma.name) in methods:
                raise SpecError(f"{where}: specified twice")
            pscope = dict(own.params)
            if [p.name for p in ma.params] != own.param_names:
                raise SpecError(f"{where}: parameters {[p.name for p in ma.params]} do not match {own.param_names}")
            for ps in ma.params:
                if ps.contract is not None:
                    _check_template(ps.contract.template, lat, pscope, f"{where}({ps.name})", "parameter")
            if ma.returns is not None:
                _check_template(ma.returns.template, lat, pscope, f"{where} return", "parameter")
            methods[(cs.name, ma.name)] = ma
    return ResolvedSpecs(fields, methods, frozenset(abstract))
