"""SIF-IR: a small SSA intermediate language with classes and heap objects."""

from .cfg import EXIT, Cfg, CfgError, build_cfg, dominators, post_dominators, scope_opens
from .check import IRError, check_program, infer_types
from .nodes import *  # noqa: F401,F403
from .parser import parse_program, parse_program_unchecked
from .printer import format_instr, print_program

__all__ = [
    "EXIT", "Cfg", "CfgError", "IRError", "build_cfg", "check_program", "dominators",
    "format_instr", "infer_types", "parse_program", "parse_program_unchecked",
    "post_dominators", "print_program", "scope_opens",
]
