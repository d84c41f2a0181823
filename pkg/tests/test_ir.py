import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sif.corpus import APP_IR, EXAMPLE_IR, load_app, read
from sif.ir.cfg import (
    EXIT,
    Cfg,
    CfgError,
    build_cfg,
    dominance_frontier,
    dominates,
    dominators,
    post_dominators,
    scope_opens,
)
from sif.ir.check import IRError
from sif.ir.nodes import BinOp, Branch, Phi, Var
from sif.ir.parser import parse_program
from sif.ir.printer import print_program
from sif.lexer import SifSyntaxError

from strategies import postdom_oracle, random_cfg


def method_a():
    return parse_program(read(EXAMPLE_IR)).cls("Example").method("methodA")


def one_method(body: str, sig: str = "int m(int a, bool c)") -> str:
    return f"class A {{\n  {sig} {{\n{body}\n  }}\n}}\n"


def test_parse_method_a_shape():
    m = method_a()
    assert m.param_names == ["a", "b"]
    assert [b.label for b in m.blocks] == ["entry", "B1", "LABEL0", "LABEL1"]
    assert m.blocks[0].instrs[0] == BinOp("cond", "gt", Var("a"), Var("b"))
    assert isinstance(m.blocks[0].terminator, Branch)
    assert isinstance(m.blocks[3].instrs[0], Phi)


def test_print_parse_round_trip_example():
    p = parse_program(read(EXAMPLE_IR))
    assert parse_program(print_program(p)) == p


def test_print_parse_round_trip_corpus():
    p = parse_program(read(APP_IR))
    assert parse_program(print_program(p)) == p


def test_round_trip_instrumented_corpus():
    out = load_app().instrumented()
    assert parse_program(print_program(out)) == out


def test_empty_class():
    p = parse_program("class A { }")
    assert p.cls("A").methods == ()
    assert parse_program(print_program(p)) == p


def test_ssa_double_assignment():
    src = one_method("  entry:\n    x = a\n    x = a\n    return x")
    with pytest.raises(IRError, match="more than once"):
        parse_program(src)


def test_missing_terminator():
    with pytest.raises(SifSyntaxError, match="terminator"):
        parse_program(one_method("  entry:\n    x = a"))


def test_phi_must_cover_predecessors():
    body = "  entry:\n    if c goto L\n  B:\n    goto L\n  L:\n    r = phi [B: a]\n    return r"
    with pytest.raises(IRError, match="predecessor"):
        parse_program(one_method(body))


def test_unknown_field():
    with pytest.raises(IRError, match="unknown field A.bonus"):
        parse_program(one_method("  entry:\n    x = o.bonus\n    return x", "int m(A o)"))


def test_undefined_use():
    with pytest.raises(IRError, match="undefined y"):
        parse_program(one_method("  entry:\n    return y"))


def test_cfg_method_a_diamond():
    cfg = build_cfg(method_a())
    assert cfg.succ == {"entry": ["B1", "LABEL0"], "B1": ["LABEL1"], "LABEL0": ["LABEL1"], "LABEL1": []}
    assert cfg.returns == ["LABEL1"]
    assert cfg.branches == {"entry"}
    assert sorted(cfg.pred["LABEL1"]) == ["B1", "LABEL0"]


def test_method_a_dominance():
    cfg = build_cfg(method_a())
    idom = dominators(cfg)
    assert all(idom[b] == "entry" for b in cfg.blocks)
    df = dominance_frontier(cfg, idom)
    assert df["B1"] == {"LABEL1"} and df["LABEL0"] == {"LABEL1"} and df["entry"] == set()


def test_method_a_post_dominance():
    ipdom = post_dominators(build_cfg(method_a()))
    assert ipdom == {"entry": "LABEL1", "B1": "LABEL1", "LABEL0": "LABEL1", "LABEL1": EXIT}


def test_straight_line():
    cfg = Cfg.from_edges({"a": ["b"], "b": ["c"], "c": []}, "a", ["c"])
    assert post_dominators(cfg) == {"a": "b", "b": "c", "c": EXIT}
    assert scope_opens(cfg, post_dominators(cfg)) == {}


def test_loop():
    # head branches into the body (which loops back) or out to the exit block
    cfg = Cfg.from_edges({"e": ["h"], "h": ["body", "x"], "body": ["h"], "x": []}, "e", ["x"], {"h"})
    idom = dominators(cfg)
    ipdom = post_dominators(cfg)
    assert ipdom["h"] == "x" and ipdom["body"] == "h"
    assert dominates(idom, "h", "body")
    assert dominance_frontier(cfg, idom)["body"] == {"h"}
    # h has two predecessors but no branch is post-dominated by it
    assert scope_opens(cfg, ipdom, idom) == {"h": None}


def test_no_path_to_return():
    cfg = Cfg.from_edges({"e": ["l", "x"], "l": ["l"], "x": []}, "e", ["x"], {"e"})
    with pytest.raises(CfgError, match="cannot reach a return"):
        post_dominators(cfg)


def test_postdom_matches_oracle_on_random_cfgs():
    rng = random.Random(11)
    for _ in range(200):
        cfg = random_cfg(rng)
        assert post_dominators(cfg) == postdom_oracle(cfg), cfg.succ


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_postdom_oracle_property(seed):
    cfg = random_cfg(random.Random(seed), max_blocks=6)
    assert post_dominators(cfg) == postdom_oracle(cfg)


def test_scope_opens_method_a():
    cfg = build_cfg(method_a())
    assert scope_opens(cfg, post_dominators(cfg)) == {"LABEL1": "entry"}


def test_scope_opens_plain_goto_join():
    # j joins a and b, but neither branch has j as its post-dominator
    succ = {"e": ["a", "b"], "a": ["j", "r"], "b": ["j"], "j": ["r"], "r": []}
    cfg = Cfg.from_edges(succ, "e", ["r"], {"e", "a"})
    assert scope_opens(cfg, post_dominators(cfg)) == {"j": None, "r": "e"}


def test_scope_opens_nested_diamonds():
    succ = {
        "e": ["t", "f"],
        "t": ["t1", "t2"],
        "t1": ["tj"],
        "t2": ["tj"],
        "tj": ["j"],
        "f": ["j"],
        "j": [],
    }
    cfg = Cfg.from_edges(succ, "e", ["j"], {"e", "t"})
    assert scope_opens(cfg, post_dominators(cfg)) == {"tj": "t", "j": "e"}


def test_scope_opens_outermost_wins():
    # both branches e and t are post-dominated by j, and e dominates t
    succ = {"e": ["t", "j"], "t": ["a", "j"], "a": ["j"], "j": []}
    cfg = Cfg.from_edges(succ, "e", ["j"], {"e", "t"})
    assert scope_opens(cfg, post_dominators(cfg)) == {"j": "e"}
