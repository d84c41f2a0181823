import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sif.lattice import (
    BOTTOM,
    PUBLIC,
    SECRET,
    TOP,
    FieldPath,
    Label,
    LabelTemplate,
    LatticeError,
    LatticeSyntaxError,
    UnresolvedDependency,
    check_laws,
    concrete,
    dep,
    format_lattice,
    instantiate,
    join,
    leq,
    make_lattice,
    parse_label,
    parse_lattice,
)
from sif.values import Ref

from strategies import random_lattice

EMPLOYEES = """\
family AssociateSL/1
family SupervisorSL/1
order Public < AssociateSL(bot)
order AssociateSL(top) < SupervisorSL(bot)
order SupervisorSL(top) < Secret
"""


def user(v):
    return dep("User", v if v in (BOTTOM, TOP) else concrete(v))


@pytest.fixture
def users():
    return parse_lattice("family User/1\n")


@pytest.fixture
def employees():
    return parse_lattice(EMPLOYEES)


def test_parse_two_families_one_edge():
    lat = parse_lattice("family AssociateSL/1\nfamily SupervisorSL/1\norder AssociateSL(top) < SupervisorSL(bot)")
    assert lat.arity == {"AssociateSL": 1, "SupervisorSL": 1}
    assert len(lat.edges) == 1
    # implicit edges: Public below everything, family bot below family top
    assert lat.leq(PUBLIC, lat.family_bot("AssociateSL"))
    assert lat.leq(lat.family_bot("AssociateSL"), lat.family_top("AssociateSL"))
    assert lat.leq(lat.family_top("AssociateSL"), lat.family_bot("SupervisorSL"))


def test_parse_empty():
    lat = parse_lattice("")
    assert lat.skeleton() == [PUBLIC, SECRET]
    assert lat.leq(PUBLIC, SECRET)


def test_self_edge_is_cycle():
    with pytest.raises(LatticeError, match="cycle"):
        parse_lattice("label A\norder A < A")


def test_longer_cycle():
    with pytest.raises(LatticeError, match="cycle"):
        parse_lattice("label A\nlabel B\norder A < B\norder B < A")


def test_syntax_error_has_position():
    with pytest.raises(LatticeSyntaxError) as err:
        parse_lattice("label A\n  lable B\n")
    assert err.value.line == 2
    assert err.value.col == 3


def test_unknown_reference():
    with pytest.raises(LatticeError, match="unknown"):
        parse_lattice("label A\norder A < Nope")


def test_redeclaration_rejected():
    with pytest.raises(LatticeError, match="redeclared"):
        parse_lattice("label A\nfamily A/1")
    with pytest.raises(LatticeError, match="redeclared"):
        parse_lattice("label Public")


def test_missing_lub_rejected():
    # A and B are both below C and D, which are incomparable
    text = "label A\nlabel B\nlabel C\nlabel D\norder A < C\norder A < D\norder B < C\norder B < D"
    with pytest.raises(LatticeError, match="least upper bound"):
        parse_lattice(text)


def test_two_maximal_bases_still_valid():
    lat = parse_lattice("label A\nlabel B\n")
    assert lat.join(Label("A"), Label("B")) == SECRET
    assert check_laws(lat) == []


def test_format_round_trip(employees):
    assert parse_lattice(format_lattice(employees)) == employees


def test_user_bottom_flows_to_user(users):
    assert leq(users, user(BOTTOM), user("alice"))
    assert leq(users, user("alice"), user(TOP))


def test_distinct_users_incomparable(users):
    assert not leq(users, user("alice"), user("bob"))
    assert not leq(users, user("bob"), user("alice"))


def test_public_secret(employees):
    assert leq(employees, PUBLIC, SECRET)
    assert not leq(employees, SECRET, PUBLIC)


def test_join_examples(users, employees):
    a_bot, a_top = employees.family_bot("AssociateSL"), employees.family_top("AssociateSL")
    assert join(employees, a_bot, a_top) == a_top
    assert join(users, user("alice"), user("bob")) == user(TOP)
    for x in employees.universe():
        assert join(employees, PUBLIC, x) == x


def test_join_of_users_is_least_upper_bound(users):
    # enumerate every upper bound of user(alice) and user(bob), take the minimum
    universe = users.skeleton() + [user("alice"), user("bob")]
    ups = [c for c in universe if leq(users, user("alice"), c) and leq(users, user("bob"), c)]
    least = [c for c in ups if all(leq(users, c, o) for o in ups)]
    assert least == [user(TOP)]


def test_cross_family(employees):
    a1 = dep("AssociateSL", concrete(1))
    s1 = dep("SupervisorSL", concrete(1))
    s2 = dep("SupervisorSL", concrete(2))
    assert leq(employees, a1, s2)
    assert not leq(employees, s1, a1)
    assert join(employees, a1, s2) == s2
    assert join(employees, s1, s2) == employees.family_top("SupervisorSL")
    assert leq(employees, s1, SECRET)


def test_dep_below_base_only_through_family_top():
    lat = parse_lattice("family F/1\nlabel B\norder F(bot) < B")
    f1 = dep("F", concrete(1))
    assert leq(lat, lat.family_bot("F"), Label("B"))
    assert not leq(lat, f1, Label("B"))
    assert join(lat, f1, Label("B")) == SECRET


def test_multi_parameter_componentwise():
    lat = parse_lattice("family User/2\n")
    a = Label("User", (concrete("ann"), concrete(1)))
    b = Label("User", (concrete("ann"), concrete(2)))
    assert not leq(lat, a, b)
    assert join(lat, a, b) == Label("User", (concrete("ann"), TOP))
    assert leq(lat, Label("User", (BOTTOM, concrete(1))), a)


def test_arity_and_undeclared_errors(employees):
    with pytest.raises(LatticeError):
        employees.leq(Label("AssociateSL", (BOTTOM, BOTTOM)), SECRET)
    with pytest.raises(LatticeError):
        employees.leq(Label("Nope"), SECRET)


def test_laws_on_corpus_lattice(employees):
    assert check_laws(employees, employees.universe((1, 2))) == []


def test_laws_on_random_lattices():
    rng = random.Random(7)
    for _ in range(10):
        lat = random_lattice(rng)
        assert check_laws(lat) == [], format_lattice(lat)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from(["bot", "top", 1, 2]), min_size=1, max_size=3))
def test_join_upper_bound_property(params):
    lat = parse_lattice(EMPLOYEES)
    ps = [BOTTOM if p == "bot" else TOP if p == "top" else concrete(p) for p in params]
    labels = [dep("AssociateSL", p) for p in ps] + [dep("SupervisorSL", p) for p in ps]
    acc = lat.join_all(labels)
    assert all(lat.leq(x, acc) for x in labels)


def test_instantiate_examples():
    assert instantiate(LabelTemplate("SupervisorSL", (FieldPath(("id",)),)), {"id": 7}) == dep(
        "SupervisorSL", concrete(7))
    assert instantiate(LabelTemplate("AssociateSL", (BOTTOM,)), {}) == dep("AssociateSL", BOTTOM)
    assert instantiate(LabelTemplate("Secret"), {}) == SECRET
    with pytest.raises(UnresolvedDependency):
        instantiate(LabelTemplate("SupervisorSL", (FieldPath(("id",)),)), {"id": None})
    with pytest.raises(UnresolvedDependency):
        instantiate(LabelTemplate("SupervisorSL", (FieldPath(("id",)),)), {})


def test_reference_params_compare_by_identity(users):
    a, b = Ref(1), Ref(2)
    assert concrete(a) == concrete(Ref(1))
    assert not leq(users, user(a), user(b))


def test_parse_label_forms():
    assert parse_label("Public") == PUBLIC
    assert parse_label("AssociateSL(1)") == dep("AssociateSL", concrete(1))
    assert parse_label("F(_, *)") == Label("F", (BOTTOM, TOP))
    assert parse_label('User("ann", ⊥)') == Label("User", (concrete("ann"), BOTTOM))
    assert parse_label("S(@3)") == dep("S", concrete(Ref(3)))
    assert parse_label(str(Label("F", (concrete("x y"), TOP)))) == Label("F", (concrete("x y"), TOP))


def test_make_lattice_equivalent_to_parse(employees):
    a_top = Label("AssociateSL", (TOP,))
    s_bot = Label("SupervisorSL", (BOTTOM,))
    lat = make_lattice([], {"AssociateSL": 1, "SupervisorSL": 1},
                       [(PUBLIC, Label("AssociateSL", (BOTTOM,))), (a_top, s_bot),
                        (Label("SupervisorSL", (TOP,)), SECRET)])
    for a in lat.universe():
        for b in lat.universe():
            assert lat.leq(a, b) == employees.leq(a, b)
