"""Recursive-descent reader for SIF-IR text."""

from __future__ import annotations

from ..lattice import BOTTOM, TOP, FieldPath, LabelTemplate, LatticeError, parse_label
from ..lexer import SifSyntaxError, TokenStream
from .nodes import (
    BINOPS,
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
    TERMINATORS,
    Var,
    is_label_name,
)

KEYWORDS = frozenset({
    "if", "goto", "return", "new", "call", "phi", "join", "savepc", "setpc", "assert",
    "leak", "instantiate", "true", "false", "null", "class", "library", "extends",
    "entry", "spec", "this", PC,
})


def parse_template(ts: TokenStream) -> LabelTemplate:
    """``Head`` or ``Head(arg, ...)`` with args ``_``, ``*`` or dotted field paths."""
    head = ts.ident("label name").text
    if not ts.accept("("):
        return LabelTemplate(head)
    args = []
    while True:
        if ts.accept("*"):
            args.append(TOP)
        elif ts.at("_"):
            ts.next()
            args.append(BOTTOM)
        else:
            names = [ts.ident("field path").text]
            while ts.accept("."):
                names.append(ts.ident("field name").text)
            args.append(FieldPath(tuple(names)))
        if ts.accept(")"):
            break
        ts.expect(",")
    return LabelTemplate(head, tuple(args))


class _Parser:
    def __init__(self, text: str, source: str | None):
        self.ts = TokenStream(text, source)

    # helpers

    def name(self, what: str = "name") -> str:
        tok = self.ts.ident(what)
        if tok.text in KEYWORDS:
            raise self.ts.error(f"{tok.text!r} is reserved", tok)
        return tok.text

    def var(self) -> str:
        tok = self.ts.peek()
        if tok.kind == "ident" and tok.text == "this":
            self.ts.next()
            return "this"
        return self.name("variable")

    def operand(self):
        tok = self.ts.peek()
        if tok.kind in ("int", "float", "str"):
            self.ts.next()
            return Lit(tok.value)
        if tok.kind == "ident" and tok.text in ("true", "false", "null"):
            self.ts.next()
            return Lit({"true": True, "false": False, "null": None}[tok.text])
        return Var(self.var())

    def label_operand(self):
        tok = self.ts.peek()
        if tok.kind == "label":
            self.ts.next()
            try:
                return parse_label(tok.text[1:-1])
            except LatticeError as exc:
                raise self.ts.error(str(exc), tok) from None
        if tok.kind == "ident" and (tok.text == PC or is_label_name(tok.text)):
            self.ts.next()
            return tok.text
        raise self.ts.error(f"expected label operand, got {tok.text!r}")

    def label_var(self) -> str:
        tok = self.ts.ident("label variable")
        if not is_label_name(tok.text):
            raise self.ts.error(f"{tok.text!r} is not a label variable", tok)
        return tok.text

    def incoming(self, label_phi: bool) -> tuple[tuple[str, str], ...]:
        self.ts.expect("[")
        out = []
        if not self.ts.at("]"):
            while True:
                block = self.ts.ident("block label").text
                self.ts.expect(":")
                if label_phi:
                    tok = self.ts.ident("label variable")
                    if tok.text != PC and not is_label_name(tok.text):
                        raise self.ts.error("label phi takes label variables", tok)
                    out.append((block, tok.text))
                else:
                    out.append((block, self.var()))
                if not self.ts.accept(","):
                    break
        self.ts.expect("]")
        return tuple(out)

    def string(self) -> str:
        tok = self.ts.peek()
        if tok.kind != "str":
            raise self.ts.error("expected string")
        self.ts.next()
        return tok.value

    # program structure

    def program(self) -> Program:
        ts = self.ts
        entry = None
        if ts.accept("entry"):
            cls = ts.ident("class name").text
            ts.expect(".")
            entry = f"{cls}.{ts.ident('method name').text}"
        classes = []
        while ts.peek().kind != "eof":
            classes.append(self.classdecl())
        return Program(tuple(classes), entry)

    def classdecl(self) -> ClassDef:
        ts = self.ts
        library = ts.accept("library")
        ts.expect("class")
        name = self.name("class name")
        sup = None
        if ts.accept("extends"):
            sup = self.name("class name")
        ts.expect("{")
        fields, methods, annotations = [], [], []
        while not ts.accept("}"):
            if ts.accept("spec"):
                fname = self.name("field name")
                ts.expect(":")
                annotations.append((fname, parse_template(ts)))
                ts.expect(";")
                continue
            type_name = ts.ident("type").text
            member = ts.ident("member name").text
            if member in KEYWORDS:
                raise ts.error(f"{member!r} is reserved")
            if ts.accept(";"):
                fields.append(FieldDef(member, type_name))
            else:
                methods.append(self.method(type_name, member))
        return ClassDef(name, sup, tuple(fields), tuple(methods), not library, tuple(annotations))

    def method(self, return_type: str, name: str) -> MethodDef:
        ts = self.ts
        ts.expect("(")
        params = []
        if not ts.at(")"):
            while True:
                ptype = ts.ident("parameter type").text
                params.append((self.name("parameter name"), ptype))
                if not ts.accept(","):
                    break
        ts.expect(")")
        ts.expect("{")
        blocks = []
        while not ts.accept("}"):
            blocks.append(self.block())
        if not blocks:
            raise ts.error(f"method {name} has no blocks")
        return MethodDef(name, tuple(params), return_type, tuple(blocks))

    def block(self) -> Block:
        ts = self.ts
        label = ts.ident("block label")
        ts.expect(":")
        instrs = []
        while True:
            tok = ts.peek()
            if tok.kind == "eof" or ts.at("}") or (tok.kind == "ident" and ts.at(":", 1)):
                raise SifSyntaxError(f"block {label.text} is missing a terminator",
                                     tok.line, tok.col, ts.source)
            instr = self.instruction()
            instrs.append(instr)
            if isinstance(instr, TERMINATORS):
                break
        return Block(label.text, tuple(instrs))

    # instructions

    def instruction(self):
        ts = self.ts
        tok = ts.peek()
        if ts.accept("if"):
            cond = self.var()
            ts.expect("goto")
            return Branch(cond, ts.ident("block label").text)
        if ts.accept("goto"):
            return Goto(ts.ident("block label").text)
        if ts.accept("return"):
            return Return(self.operand())
        if ts.accept("setpc"):
            return SetPc(self._label_src())
        if ts.accept("assert"):
            value = self._label_src()
            ts.expect("<=")
            bound = self._label_src()
            reason = self.string() if ts.peek().kind == "str" else ""
            return AssertFlow(value, bound, reason)
        if ts.accept("leak"):
            return LeakHalt(self.string())
        if tok.kind != "ident":
            raise ts.error(f"expected instruction, got {tok.text!r}")
        if ts.at(".", 1):
            obj = self.var()
            ts.expect(".")
            fld = ts.ident("field name").text
            ts.expect("=")
            if is_label_name(fld):
                return StoreLabel(obj, fld, self._label_src())
            return StoreField(obj, fld, self.operand())
        if tok.text == PC or is_label_name(tok.text):
            ts.next()
            ts.expect("=")
            return self._label_rhs(tok.text)
        dst = self.name("variable")
        ts.expect("=")
        return self._rhs(dst)

    def _label_src(self) -> str:
        tok = self.ts.ident("label variable")
        if tok.text != PC and not is_label_name(tok.text):
            raise self.ts.error(f"{tok.text!r} is not a label variable", tok)
        return tok.text

    def _label_rhs(self, dst: str):
        ts = self.ts
        if ts.accept("phi"):
            return PhiLabel(dst, self.incoming(label_phi=True))
        if dst == PC:
            raise ts.error("pc can only be assigned by phi or setpc")
        if ts.accept("join"):
            ts.expect("(")
            ops = []
            if not ts.at(")"):
                while True:
                    ops.append(self.label_operand())
                    if not ts.accept(","):
                        break
            ts.expect(")")
            return JoinInto(dst, tuple(ops))
        if ts.accept("savepc"):
            return SavePc(dst)
        if ts.accept("instantiate"):
            if ts.peek().kind == "ident" and ts.at(".", 1):
                obj = self.var()
                ts.expect(".")
                return InstantiateTemplate(dst, obj=obj, field=ts.ident("field name").text)
            return InstantiateTemplate(dst, template=parse_template(ts))
        obj = self.var()
        ts.expect(".")
        return LoadLabel(dst, obj, self.label_var())

    def _rhs(self, dst: str):
        ts = self.ts
        tok = ts.peek()
        if tok.kind in ("int", "float", "str") or (
            tok.kind == "ident" and tok.text in ("true", "false", "null")
        ):
            return Const(dst, self.operand())
        if ts.accept("new"):
            return New(dst, self.name("class name"))
        if ts.accept("call"):
            obj = self.var()
            ts.expect(".")
            meth = ts.ident("method name").text
            ts.expect("(")
            args = []
            if not ts.at(")"):
                while True:
                    args.append(self.operand())
                    if not ts.accept(","):
                        break
            ts.expect(")")
            return Call(dst, obj, meth, tuple(args))
        if ts.accept("phi"):
            return Phi(dst, self.incoming(label_phi=False))
        if tok.kind == "ident" and tok.text in BINOPS and ts.at("(", 1):
            ts.next()
            ts.expect("(")
            lhs = self.operand()
            ts.expect(",")
            rhs = self.operand()
            ts.expect(")")
            return BinOp(dst, tok.text, lhs, rhs)
        src = self.var()
        if ts.accept("."):
            fld = ts.ident("field name").text
            if is_label_name(fld):
                raise ts.error("label slots can only be read into label variables")
            return LoadField(dst, src, fld)
        return Copy(dst, src)


def parse_program_unchecked(text: str, source: str | None = None) -> Program:
    """Parse without semantic validation."""
    return _Parser(text, source).program()


def parse_program(text: str, source: str | None = None) -> Program:
    """Parse SIF-IR text and validate types, control flow and SSA form."""
    from .check import check_program

    prog = parse_program_unchecked(text, source)
    check_program(prog)
    return prog
