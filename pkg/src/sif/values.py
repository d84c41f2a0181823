"""Runtime values shared by the interpreter and label instantiation.

Plain Python values stand in for IR values: ``int`` (64-bit integers),
``float``, ``bool``, ``str`` and ``None`` (null). Object references are
wrapped in :class:`Ref` so that they can never be confused with integers.
"""

from __future__ import annotations

from dataclasses import dataclass

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class Ref:
    """Reference to a heap object, compared by identity token only."""

    oid: int

    def __str__(self) -> str:
        return f"@{self.oid}"


def wrap_int(value: int) -> int:
    """Wrap an unbounded Python int into signed 64-bit range."""
    value &= (1 << 64) - 1
    if value > INT_MAX:
        value -= 1 << 64
    return value


def format_value(value) -> str:
    """Render a runtime value the way ``concat`` and reports show it."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value != value:
            return "NaN"
        if value in (float("inf"), float("-inf")):
            return "Infinity" if value > 0 else "-Infinity"
        return repr(value)
    return str(value)
