"""Tokenizer shared by the IR, specification and test-case readers."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass


class SifSyntaxError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0, source: str | None = None):
        where = f"{line}:{col}: " if line else ""
        if source:
            where = f"{source}:{where}"
        super().__init__(f"{where}{message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # str, float, int, label, ident, punct, eof
    text: str
    line: int
    col: int

    @property
    def value(self):
        if self.kind == "str":
            return json.loads(self.text)
        if self.kind == "int":
            return int(self.text)
        if self.kind == "float":
            return float(self.text)
        return self.text


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<float>-?\d+\.\d+(?:[eE][+-]?\d+)?|-?\d+[eE][+-]?\d+)
  | (?P<int>-?\d+)
  | (?P<label><[A-Za-z_](?:[^<>"\n]|"(?:[^"\\\n]|\\.)*")*>)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<punct><=|[{}()\[\],;:.=*/?!@])
    """,
    re.VERBOSE,
)


def tokenize(text: str, source: str | None = None) -> list[Token]:
    toks: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise SifSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1, source
            )
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Token(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


class TokenStream:
    def __init__(self, text: str, source: str | None = None):
        self.toks = tokenize(text, source)
        self.i = 0
        self.source = source

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.toks[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, text: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok.kind in ("punct", "ident") and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def error(self, message: str, tok: Token | None = None) -> SifSyntaxError:
        tok = tok or self.peek()
        return SifSyntaxError(message, tok.line, tok.col, self.source)

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not self.at(text):
            got = tok.text or "end of input"
            raise self.error(f"expected {text!r}, got {got!r}")
        return self.next()

    def ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            raise self.error(f"expected {what}, got {tok.text or 'end of input'!r}")
        return self.next()
