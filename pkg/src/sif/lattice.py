"""Dependent security labels over a user-declared join-semilattice.

A lattice file declares base labels, label families with a fixed arity and
strict order edges between *skeleton* labels. The skeleton is the finite
set ``{Public, Secret} + bases + {F(bot), F(top) for each family F}``.
Instances of a family with concrete parameters live between ``F(bot)`` and
``F(top)``; two different concrete instances are incomparable.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .values import Ref


class LatticeError(Exception):
    """Malformed lattice definition or label."""


class LatticeSyntaxError(LatticeError):
    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class UnresolvedDependency(LatticeError):
    """A label dependency could not be read (unset, null or missing)."""


@dataclass(frozen=True)
class ParamValue:
    """One family parameter: ``bot``, ``top`` or a concrete int/str/ref."""

    kind: str
    value: object = None

    def __post_init__(self):
        if self.kind not in ("bot", "top", "int", "str", "ref"):
            raise ValueError(f"bad parameter kind {self.kind!r}")

    @property
    def concrete(self) -> bool:
        return self.kind in ("int", "str", "ref")

    def __str__(self) -> str:
        if self.kind == "bot":
            return "_"
        if self.kind == "top":
            return "*"
        if self.kind == "str":
            return json.dumps(self.value)
        if self.kind == "ref":
            return f"@{self.value}"
        return str(self.value)


BOTTOM = ParamValue("bot")
TOP = ParamValue("top")


def concrete(value) -> ParamValue:
    """Wrap a runtime value as a concrete label parameter."""
    if value is None:
        raise UnresolvedDependency("dependency is null")
    if isinstance(value, Ref):
        return ParamValue("ref", value.oid)
    if isinstance(value, bool):
        return ParamValue("int", int(value))
    if isinstance(value, int):
        return ParamValue("int", value)
    if isinstance(value, str):
        return ParamValue("str", value)
    raise LatticeError(f"unsupported dependency value {value!r}")


def param_leq(p: ParamValue, q: ParamValue) -> bool:
    return p == q or p.kind == "bot" or q.kind == "top"


def param_join(p: ParamValue, q: ParamValue) -> ParamValue:
    if p == q or q.kind == "bot":
        return p
    if p.kind == "bot":
        return q
    return TOP


@dataclass(frozen=True)
class Label:
    """A security label.

    ``params is None`` for Public, Secret and base labels; a tuple for
    instances of a family.
    """

    name: str
    params: tuple[ParamValue, ...] | None = None

    @property
    def is_dep(self) -> bool:
        return self.params is not None

    def __str__(self) -> str:
        if self.params is None:
            return self.name
        return f"{self.name}({', '.join(str(p) for p in self.params)})"


PUBLIC = Label("Public")
SECRET = Label("Secret")
BUILTINS = ("Public", "Secret")


def dep(family: str, *params: ParamValue) -> Label:
    return Label(family, tuple(params))


@dataclass(frozen=True)
class FieldPath:
    """Dotted reference to the value a label parameter depends on."""

    names: tuple[str, ...]

    def __str__(self) -> str:
        return ".".join(self.names)


@dataclass(frozen=True)
class LabelTemplate:
    """A label whose parameters are filled in from live values.

    ``args`` is ``None`` for labels without parameters; otherwise each
    argument is a :class:`FieldPath`, :data:`BOTTOM` or :data:`TOP`.
    """

    head: str
    args: tuple[FieldPath | ParamValue, ...] | None = None

    def __str__(self) -> str:
        if self.args is None:
            return self.head
        return f"{self.head}({', '.join(str(a) for a in self.args)})"

    def dependencies(self) -> list[FieldPath]:
        return [a for a in self.args or () if isinstance(a, FieldPath)]


def instantiate(template: LabelTemplate, env: Mapping[str, object]) -> Label:
    """Build the concrete label for ``template`` reading dependencies from ``env``.

    ``_`` becomes :data:`BOTTOM`, ``*`` becomes :data:`TOP`. A missing or
    null dependency raises :class:`UnresolvedDependency`.
    """
    if template.args is None:
        return Label(template.head)
    params = []
    for arg in template.args:
        if isinstance(arg, ParamValue):
            params.append(arg)
            continue
        if len(arg.names) != 1:
            raise LatticeError(f"dependency {arg} does not name a local value")
        name = arg.names[0]
        if name not in env or env[name] is None:
            raise UnresolvedDependency(f"dependency {name!r} of {template} is unset")
        params.append(concrete(env[name]))
    return Label(template.head, tuple(params))


# -- label text -------------------------------------------------------------

_LABEL_TOKEN = re.compile(
    r'\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<num>-?\d+)|(?P<ref>@\d+)'
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>[(),*⊥⊤]))"
)


def _label_tokens(text: str) -> list[tuple[str, str]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _LABEL_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LatticeError(f"bad label syntax at {text[pos:]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def parse_param(kind: str, tok: str) -> ParamValue:
    if tok in ("_", "bot", "⊥"):
        return BOTTOM
    if tok in ("*", "top", "⊤"):
        return TOP
    if kind == "num":
        return ParamValue("int", int(tok))
    if kind == "str":
        return ParamValue("str", json.loads(tok))
    if kind == "ref":
        return ParamValue("ref", int(tok[1:]))
    raise LatticeError(f"bad label parameter {tok!r}")


def parse_label(text: str) -> Label:
    """Parse label text such as ``Secret``, ``AssociateSL(7)`` or ``User(_, "bob")``."""
    toks = _label_tokens(text)
    if not toks or toks[0][0] != "id":
        raise LatticeError(f"bad label {text!r}")
    name = toks[0][1]
    if len(toks) == 1:
        return Label(name)
    if toks[1][1] != "(" or toks[-1][1] != ")":
        raise LatticeError(f"bad label {text!r}")
    inner = toks[2:-1]
    params: list[ParamValue] = []
    expect_value = True
    for kind, tok in inner:
        if expect_value:
            params.append(parse_param(kind, tok))
        elif tok != ",":
            raise LatticeError(f"bad label {text!r}")
        expect_value = not expect_value
    if expect_value:
        raise LatticeError(f"bad label {text!r}")
    return Label(name, tuple(params))


# -- lattice definition -----------------------------------------------------


@dataclass(frozen=True)
class LatticeDef:
    """Declared bases, families (name -> arity) and strict order edges.

    Construct through :func:`parse_lattice` or :func:`make_lattice`; both
    validate that the skeleton is a partial order with all binary joins.
    """

    bases: frozenset[str] = frozenset()
    families: tuple[tuple[str, int], ...] = ()
    edges: tuple[tuple[Label, Label], ...] = ()
    _index: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _above: list = field(default_factory=list, init=False, repr=False, compare=False)
    _lub: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def arity(self) -> dict[str, int]:
        return dict(self.families)

    def family_bot(self, family: str) -> Label:
        return Label(family, (BOTTOM,) * self.arity[family])

    def family_top(self, family: str) -> Label:
        return Label(family, (TOP,) * self.arity[family])

    def skeleton(self) -> list[Label]:
        nodes = [PUBLIC, SECRET]
        nodes += [Label(b) for b in sorted(self.bases)]
        for fam, _ in self.families:
            nodes += [self.family_bot(fam), self.family_top(fam)]
        return nodes

    def universe(self, concretes: Sequence[int] = (1, 2)) -> list[Label]:
        """Skeleton plus every family instance over ``{bot, top} + concretes``."""
        out = self.skeleton()
        seen = set(out)
        choices = [BOTTOM, TOP] + [ParamValue("int", c) for c in concretes]
        for fam, n in self.families:
            for ps in itertools.product(choices, repeat=n):
                lab = Label(fam, ps)
                if lab not in seen:
                    seen.add(lab)
                    out.append(lab)
        return out

    # well-formedness

    def check(self, label: Label) -> None:
        if label.params is None:
            if label.name in BUILTINS or label.name in self.bases:
                return
            if label.name in self.arity:
                raise LatticeError(f"family {label.name} used without parameters")
            raise LatticeError(f"undeclared label {label.name}")
        if label.name not in self.arity:
            raise LatticeError(f"undeclared label family {label.name}")
        want = self.arity[label.name]
        if len(label.params) != want:
            raise LatticeError(
                f"{label} has {len(label.params)} parameters, family {label.name} takes {want}"
            )

    # order

    def _upper(self, label: Label) -> Label:
        if label.params is None:
            return label
        if all(p.kind == "bot" for p in label.params):
            return self.family_bot(label.name)
        return self.family_top(label.name)

    def _lower(self, label: Label) -> Label:
        if label.params is None:
            return label
        if all(p.kind == "top" for p in label.params):
            return self.family_top(label.name)
        return self.family_bot(label.name)

    def _sk_leq(self, a: Label, b: Label) -> bool:
        return self._index[b] in self._above[self._index[a]]

    def leq(self, a: Label, b: Label) -> bool:
        self.check(a)
        self.check(b)
        if a == b or a == PUBLIC or b == SECRET:
            return True
        if a.params is not None and b.params is not None and a.name == b.name:
            return all(param_leq(p, q) for p, q in zip(a.params, b.params))
        return self._sk_leq(self._upper(a), self._lower(b))

    def join(self, a: Label, b: Label) -> Label:
        if self.leq(a, b):
            return b
        if self.leq(b, a):
            return a
        if a.params is not None and b.params is not None and a.name == b.name:
            return Label(a.name, tuple(param_join(p, q) for p, q in zip(a.params, b.params)))
        return self._lub[(self._upper(a), self._upper(b))]

    def join_all(self, labels: Iterable[Label]) -> Label:
        out = PUBLIC
        for lab in labels:
            out = self.join(out, lab)
        return out


def leq(lat: LatticeDef, a: Label, b: Label) -> bool:
    return lat.leq(a, b)


def join(lat: LatticeDef, a: Label, b: Label) -> Label:
    return lat.join(a, b)


def _validate(lat: LatticeDef) -> None:
    nodes = lat.skeleton()
    index = {n: i for i, n in enumerate(nodes)}
    succ: list[set[int]] = [set() for _ in nodes]
    pub, sec = index[PUBLIC], index[SECRET]
    for i in range(len(nodes)):
        if i != pub:
            succ[pub].add(i)
        if i != sec:
            succ[i].add(sec)
    for fam, _ in lat.families:
        succ[index[lat.family_bot(fam)]].add(index[lat.family_top(fam)])
    for lo, hi in lat.edges:
        for end in (lo, hi):
            if end not in index:
                raise LatticeError(f"unknown label reference {end}")
        if lo == hi:
            raise LatticeError(f"cycle in order edges at {lo}")
        succ[index[lo]].add(index[hi])

    above: list[set[int]] = []
    for i in range(len(nodes)):
        seen = {i}
        stack = [i]
        while stack:
            for j in succ[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        above.append(seen)
    for i, j in itertools.combinations(range(len(nodes)), 2):
        if j in above[i] and i in above[j]:
            raise LatticeError(f"cycle in order edges between {nodes[i]} and {nodes[j]}")

    lub = {}
    for i, j in itertools.combinations_with_replacement(range(len(nodes)), 2):
        ups = above[i] & above[j]
        least = [k for k in ups if ups <= above[k]]
        if len(least) != 1:
            raise LatticeError(f"{nodes[i]} and {nodes[j]} have no least upper bound")
        lub[(nodes[i], nodes[j])] = lub[(nodes[j], nodes[i])] = nodes[least[0]]

    object.__setattr__(lat, "_index", index)
    object.__setattr__(lat, "_above", above)
    object.__setattr__(lat, "_lub", lub)


def make_lattice(
    bases: Iterable[str] = (),
    families: Mapping[str, int] | Iterable[tuple[str, int]] = (),
    edges: Iterable[tuple[Label, Label]] = (),
) -> LatticeDef:
    fams = tuple(sorted(dict(families).items()))
    lat = LatticeDef(frozenset(bases), fams, tuple(edges))
    clash = set(lat.bases) & {f for f, _ in fams}
    if clash or set(BUILTINS) & (set(lat.bases) | {f for f, _ in fams}):
        raise LatticeError(f"label redeclared: {sorted(clash or set(BUILTINS))[0]}")
    _validate(lat)
    return lat


_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_DECL_LABEL = re.compile(rf"label\s+({_IDENT})$")
_DECL_FAMILY = re.compile(rf"family\s+({_IDENT})\s*/\s*(\d+)$")
_DECL_ORDER = re.compile(rf"order\s+(.+?)\s*<\s*(.+)$")
_REF = re.compile(rf"({_IDENT})(?:\s*\(\s*(bot|top)\s*\))?$")


def parse_lattice(text: str) -> LatticeDef:
    """Parse the line-oriented lattice format::

        label Admin
        family User/1
        order User(top) < Admin
    """
    bases: list[str] = []
    families: dict[str, int] = {}
    raw_edges: list[tuple[str, str, int]] = []
    declared: set[str] = set(BUILTINS)
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        col = line.index(body[0]) + 1
        if m := _DECL_LABEL.match(body):
            name = m.group(1)
            if name in declared:
                raise LatticeSyntaxError(f"label {name} redeclared", lineno, col)
            declared.add(name)
            bases.append(name)
        elif m := _DECL_FAMILY.match(body):
            name, arity = m.group(1), int(m.group(2))
            if name in declared:
                raise LatticeSyntaxError(f"label {name} redeclared", lineno, col)
            if arity < 1:
                raise LatticeSyntaxError(f"family {name} needs arity >= 1", lineno, col)
            declared.add(name)
            families[name] = arity
        elif m := _DECL_ORDER.match(body):
            raw_edges.append((m.group(1), m.group(2), lineno))
        else:
            raise LatticeSyntaxError(f"cannot parse declaration {body!r}", lineno, col)

    def ref(text: str, lineno: int) -> Label:
        m = _REF.match(text.strip())
        if not m:
            raise LatticeSyntaxError(f"bad label reference {text!r}", lineno)
        name, end = m.groups()
        if end is None:
            if name in BUILTINS or name in bases:
                return Label(name)
            raise LatticeSyntaxError(f"unknown label reference {name}", lineno)
        if name not in families:
            raise LatticeSyntaxError(f"unknown label family {name}", lineno)
        p = BOTTOM if end == "bot" else TOP
        return Label(name, (p,) * families[name])

    edges = [(ref(lo, n), ref(hi, n)) for lo, hi, n in raw_edges]
    return make_lattice(bases, families, edges)


def format_lattice(lat: LatticeDef) -> str:
    def ref(label: Label) -> str:
        if label.params is None:
            return label.name
        return f"{label.name}({'bot' if label.params[0].kind == 'bot' else 'top'})"

    lines = [f"label {b}" for b in sorted(lat.bases)]
    lines += [f"family {f}/{n}" for f, n in lat.families]
    lines += [f"order {ref(a)} < {ref(b)}" for a, b in lat.edges]
    return "\n".join(lines) + ("\n" if lines else "")


def check_laws(lat: LatticeDef, universe: Sequence[Label] | None = None) -> list[str]:
    """Exhaustively verify partial-order and least-upper-bound laws.

    Returns human-readable violations, empty when every law holds.
    """
    u = list(universe if universe is not None else lat.universe())
    le = {(a, b): lat.leq(a, b) for a in u for b in u}
    jn = {(a, b): lat.join(a, b) for a in u for b in u}

    def leq(a: Label, b: Label) -> bool:
        hit = le.get((a, b))
        return lat.leq(a, b) if hit is None else hit

    def join(a: Label, b: Label) -> Label:
        hit = jn.get((a, b))
        return lat.join(a, b) if hit is None else hit

    out: list[str] = []
    for a in u:
        if not le[(a, a)]:
            out.append(f"reflexivity: not {a} <= {a}")
        if not (leq(PUBLIC, a) and leq(a, SECRET)):
            out.append(f"bounds: {a} not between Public and Secret")
        if jn[(a, a)] != a:
            out.append(f"idempotence: {a}")
    for a, b in itertools.product(u, u):
        if a != b and le[(a, b)] and le[(b, a)]:
            out.append(f"antisymmetry: {a} <= {b} <= {a}")
        j = jn[(a, b)]
        if j != jn[(b, a)]:
            out.append(f"commutativity: {a} join {b}")
        if not (leq(a, j) and leq(b, j)):
            out.append(f"upper bound: {a} join {b} = {j}")
        for c in u:
            if le[(a, b)] and le[(b, c)] and not le[(a, c)]:
                out.append(f"transitivity: {a} <= {b} <= {c}")
            if le[(a, c)] and le[(b, c)] and not leq(j, c):
                out.append(f"least: {a} join {b} = {j} not <= {c}")
        if len(out) > 50:
            return out
    for a, b, c in itertools.product(u, u, u):
        if join(join(a, b), c) != join(a, join(b, c)):
            out.append(f"associativity: {a}, {b}, {c}")
            break
    return out
    for a, b, c in itertools.product(u, u, u):
        if lat.join(lat.join(a, b), c) != lat.join(a, lat.join(b, c)):
            out.append(f"associativity: {a}, {b}, {c}")
            break
    return out
