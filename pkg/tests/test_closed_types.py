from __future__ import annotations

from hypothesis import given, settings, strategies as st

from effc.closed_types import (
    ClosedSubstitution, apply_closed, check_closed, join, satisfies, shape, singleton_union,
    subtype,
)
from effc.surface import parse_computation, parse_expression, parse_program
from effc.syntax import (
    BOOL, NAT, UNIT, Arrow, CArrow, CDirty, CEff, CHandler, Dirty, DirtVar, EffTy, InstIn,
    RegionLe, RegionVar, Row, TyLe, TyVar, Val, Zero,
)

SIG = parse_program("effect ref { lookup : unit -> nat, update : nat -> unit }\n"
                    "instance r : ref").signature
LOOKUP, UPDATE = ("r", "lookup"), ("r", "update")


def test_subtype_examples():
    assert subtype(BOOL, BOOL)
    assert subtype(CEff("E", frozenset({"i"})), CEff("E", frozenset({"i", "j"})))
    wide = CArrow(CEff("E", frozenset({"i", "j"})), CDirty(UNIT))
    narrow = CArrow(CEff("E", frozenset({"i"})), CDirty(UNIT, frozenset({("i", "op")})))
    assert subtype(wide, narrow) and not subtype(narrow, wide)


def test_apply_closed_examples():
    d = DirtVar(2)
    assert apply_closed(ClosedSubstitution(dirt={2: frozenset()}), Dirty(NAT, Row((), d))) \
        == CDirty(NAT)
    rho, delta = RegionVar(1), DirtVar(2, frozenset({"op"}))
    row = Row((("op", rho),), delta)
    sigma = ClosedSubstitution(reg={1: frozenset({"ins"})}, dirt={2: frozenset()})
    assert apply_closed(sigma, row) == frozenset({("ins", "op")})
    a = TyVar(3)
    sigma = ClosedSubstitution(ty={3: NAT}, reg={1: frozenset({"r", "r2"})},
                               dirt={2: frozenset({("q", "op2")})})
    got = apply_closed(sigma, Arrow(a, Dirty(a, row)))
    assert got == CArrow(NAT, CDirty(NAT, frozenset({("r", "op"), ("r2", "op"), ("q", "op2")})))


def test_satisfies_examples():
    star = RegionVar(3, inhabited=True)
    assert satisfies(ClosedSubstitution(reg={3: frozenset({"ins"})}), InstIn("ins", star))
    assert singleton_union([frozenset({"i1", "i2"}), frozenset({"i2"}),
                            frozenset({"i3", "i4"}), frozenset({"i5"})]) == {"i2", "i5"}
    k = RegionLe(RegionVar(1), RegionVar(2), frozenset({star}))
    ok = ClosedSubstitution(reg={1: frozenset("ab"), 2: frozenset("a"), 3: frozenset("b")})
    bad = ClosedSubstitution(reg={1: frozenset("ab"), 2: frozenset("a"), 3: frozenset("bc")})
    assert satisfies(ok, k) and not satisfies(bad, k)


def test_check_closed_examples():
    assert check_closed({}, Val(Zero()), CDirty(NAT), signature=SIG)
    c = parse_computation("let x1 = (let x2 = r#lookup () in r#update x2) in val 0", SIG)
    h = parse_expression("handler | val x -> r#update x | r#lookup x k -> k (succ 0)"
                         " | r#update x k -> k ()", SIG)
    both = frozenset({LOOKUP, UPDATE})
    assert check_closed({}, c, CDirty(NAT, both), signature=SIG)
    assert not check_closed({}, c, CDirty(NAT, frozenset({UPDATE})), signature=SIG)
    assert check_closed({}, h, CHandler(CDirty(NAT, both), CDirty(UNIT, frozenset({UPDATE}))),
                        signature=SIG)
    # the value case calls update, so the outgoing dirt cannot be empty
    assert not check_closed({}, h, CHandler(CDirty(NAT, both), CDirty(UNIT)), signature=SIG)


def test_context_anti_monotone():
    e = parse_expression("fun y -> x y", SIG)
    small = CArrow(NAT, CDirty(NAT))
    big = CArrow(NAT, CDirty(NAT, frozenset({LOOKUP})))
    target = CArrow(NAT, CDirty(NAT, frozenset({LOOKUP})))
    assert check_closed({"x": big}, e, target, signature=SIG)
    assert check_closed({"x": small}, e, target, signature=SIG)
    assert not check_closed({"x": big}, e, small, signature=SIG)


def test_join_is_an_upper_bound():
    a = CEff("E", frozenset({"i"}))
    b = CEff("E", frozenset({"j"}))
    j = join(a, b)
    assert subtype(a, j) and subtype(b, j)
    assert join(BOOL, NAT) is None


INSTANCES = ["i", "j"]
DIRT_PAIRS = [("i", "op"), ("j", "op")]


def regions():
    return st.sets(st.sampled_from(INSTANCES), min_size=1).map(frozenset)


def dirts():
    return st.sets(st.sampled_from(DIRT_PAIRS)).map(frozenset)


def closed_types(depth=3):
    base = st.one_of(st.sampled_from([BOOL, NAT, UNIT]), regions().map(lambda r: CEff("E", r)))
    if depth == 0:
        return base
    sub = closed_types(depth - 1)
    return st.one_of(
        base,
        st.builds(lambda a, b, d: CArrow(a, CDirty(b, d)), sub, sub, dirts()),
        st.builds(lambda a, d1, b, d2: CHandler(CDirty(a, d1), CDirty(b, d2)),
                  sub, dirts(), sub, dirts()),
    )


@given(closed_types())
def test_subtype_reflexive(t):
    assert subtype(t, t)


@settings(max_examples=300)
@given(closed_types(2), closed_types(2), closed_types(2))
def test_subtype_transitive(a, b, c):
    if subtype(a, b) and subtype(b, c):
        assert subtype(a, c)


@given(closed_types(2), closed_types(2))
def test_subtype_respects_shape(a, b):
    if subtype(a, b):
        assert shape(a) == shape(b)


@given(closed_types(1), closed_types(1))
def test_satisfies_agrees_with_subtype(a, b):
    sigma = ClosedSubstitution(ty={1: a, 2: b})
    assert satisfies(sigma, TyLe(TyVar(1), TyVar(2))) == subtype(a, b)


@given(regions(), regions())
def test_satisfies_effect_constraint(r1, r2):
    p, q = RegionVar(1, inhabited=True), RegionVar(2, inhabited=True)
    sigma = ClosedSubstitution(reg={1: r1, 2: r2})
    k = TyLe(EffTy("E", p), EffTy("E", q))
    assert satisfies(sigma, k) == (r1 <= r2)
