"""Test-case files: one entry call per case with input labels and the expected outcome.

::

    case own_salary: call App.associateSalary(1, 1) labels(AssociateSL(1), Public) pc(Public) expect normal
    case "List Employees": call App.listEmployees() expect normal

``labels(...)`` and ``pc(...)`` are optional and default to Public.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir.nodes import Lit
from .ir.printer import format_operand
from .lattice import PUBLIC, Label, LatticeError, parse_label
from .lexer import SifSyntaxError, TokenStream

NORMAL = "normal"
LEAK = "leak"


@dataclass(frozen=True)
class Case:
    name: str
    entry: str
    args: tuple = ()
    labels: tuple[Label, ...] = ()
    pc: Label = PUBLIC
    expect: str = NORMAL
    line: int = 0

    def inputs(self) -> list[tuple[object, Label]]:
        return list(zip(self.args, self.labels))


def _label(ts: TokenStream) -> Label:
    tok = ts.peek()
    if tok.kind == "label":
        ts.next()
        text = tok.text[1:-1]
    else:
        text = ts.ident("label").text
        if ts.at("("):
            depth, parts = 0, []
            while True:
                t = ts.next()
                if t.kind == "eof":
                    raise ts.error("unterminated label", t)
                parts.append(t.text)
                depth += t.text == "(" and t.kind == "punct"
                depth -= t.text == ")" and t.kind == "punct"
                if depth == 0:
                    break
            text += "".join(p if p != "," else ", " for p in parts)
    try:
        return parse_label(text)
    except LatticeError as exc:
        raise ts.error(str(exc), tok) from None


def _arg(ts: TokenStream):
    tok = ts.next()
    if tok.kind in ("int", "float", "str"):
        return tok.value
    if tok.kind == "ident" and tok.text in ("true", "false", "null"):
        return {"true": True, "false": False, "null": None}[tok.text]
    raise ts.error(f"expected literal argument, got {tok.text!r}", tok)


def _list(ts: TokenStream, item) -> list:
    ts.expect("(")
    out = []
    if not ts.accept(")"):
        while True:
            out.append(item(ts))
            if ts.accept(")"):
                break
            ts.expect(",")
    return out


def parse_cases(text: str, source: str | None = None) -> list[Case]:
    ts = TokenStream(text, source)
    cases: list[Case] = []
    names: set[str] = set()
    while ts.peek().kind != "eof":
        start = ts.expect("case")
        tok = ts.next()
        if tok.kind not in ("ident", "str"):
            raise ts.error("expected case name", tok)
        name = tok.value
        if name in names:
            raise ts.error(f"duplicate case {name!r}", tok)
        names.add(name)
        ts.expect(":")
        ts.expect("call")
        cls = ts.ident("class name").text
        ts.expect(".")
        meth = ts.ident("method name").text
        args = tuple(_list(ts, _arg))
        labels: tuple[Label, ...] = ()
        pc = PUBLIC
        if ts.accept("labels"):
            labels = tuple(_list(ts, _label))
            if len(labels) != len(args):
                raise ts.error(f"case {name}: {len(args)} arguments but {len(labels)} labels")
        if ts.accept("pc"):
            ts.expect("(")
            pc = _label(ts)
            ts.expect(")")
        ts.expect("expect")
        kind = ts.ident("normal or leak")
        if kind.text not in (NORMAL, LEAK):
            raise ts.error(f"expected 'normal' or 'leak', got {kind.text!r}", kind)
        cases.append(Case(name, f"{cls}.{meth}", args, labels or (PUBLIC,) * len(args), pc, kind.text, start.line))
    return cases


def format_case(c: Case) -> str:
    name = c.name if c.name.isidentifier() else f'"{c.name}"'
    args = ", ".join(format_operand(Lit(a)) for a in c.args)
    labels = ", ".join(str(lab) for lab in c.labels)
    return f"case {name}: call {c.entry}({args}) labels({labels}) pc({c.pc}) expect {c.expect}"


__all__ = ["Case", "LEAK", "NORMAL", "SifSyntaxError", "format_case", "parse_cases"]
