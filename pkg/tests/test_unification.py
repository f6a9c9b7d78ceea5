from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from effc.errors import BudgetExceeded, OccursCycle, TypeMismatch, UnificationError
from effc.syntax import (
    ATOMIC_TYPES, BOOL, NAT, Arrow, DirtLe, DirtRowLe, Dirty, DirtVar, Fresh, InstIn, RegionLe,
    RegionVar, Row, TyLe, TyVar, free_params,
)
from effc.testkit import unify_check
from effc.unification import (
    ConstraintSet, closure_add, is_unified, occur_check, refresh, unify,
)

from gen import ConstraintGen, small_universe

A = [TyVar(i) for i in range(12)]


def arrow(x, y, d=9):
    return Arrow(x, Dirty(y, Row((), DirtVar(d))))


def strs(cset):
    return sorted(str(k) for k in cset.atoms())


def test_closure_composes_type_constraints():
    c = closure_add(ConstraintSet.from_constraints([TyLe(A[1], A[2])]), TyLe(A[2], A[3]))
    assert "α1 ≤ α3" in strs(c)


def test_closure_of_single_dirt_constraint():
    c = closure_add(ConstraintSet(), DirtLe(DirtVar(1), DirtVar(2)))
    assert strs(c) == ["δ1 ≤ δ2"]


def test_closure_accumulates_handled_regions():
    r1, r2 = RegionVar(1), RegionVar(2)
    ra, rb = RegionVar(3, True), RegionVar(4, True)
    c = ConstraintSet.from_constraints([InstIn("ins", r1, frozenset({ra}))])
    c = closure_add(c, RegionLe(r1, r2, frozenset({rb})))
    assert InstIn("ins", r2, frozenset({ra, rb})) in c


def test_occur_check():
    assert occur_check(A[1], arrow(A[1], BOOL), ConstraintSet())
    assert not occur_check(A[1], arrow(A[2], BOOL), ConstraintSet())


def test_occur_check_sees_the_skeleton():
    c = ConstraintSet.from_constraints([TyLe(A[1], A[2])])
    assert occur_check(A[1], arrow(A[2], BOOL), c)


def test_refresh():
    assert refresh(BOOL, Fresh()) == BOOL
    t = Arrow(A[1], Dirty(NAT, Row((("op", RegionVar(5)),), DirtVar(6, frozenset({"op"})))))
    f = Fresh(100)
    one, two = refresh(t, f), refresh(t, f)
    assert str(one) == "(α100 -> nat ! {op: ρ101 | δ102})"
    assert not free_params(one) & free_params(two)
    assert not free_params(one) & free_params(t)


def test_unify_empty():
    sigma, c = unify([])
    assert not sigma and len(c) == 0


def test_direct_cycle():
    with pytest.raises(OccursCycle):
        unify([TyLe(arrow(A[1], BOOL), A[1])])


def test_cycle_through_skeletons():
    # merging α4 into α1 and α3 makes decomposing α3 run into α4 again
    with pytest.raises(OccursCycle):
        unify([TyLe(arrow(A[1], A[2]), A[3]), TyLe(A[4], A[1]), TyLe(A[4], A[3])])


def test_head_mismatch():
    with pytest.raises(TypeMismatch):
        unify([TyLe(BOOL, NAT)])
    with pytest.raises(TypeMismatch):
        unify([TyLe(arrow(A[1], A[2]), BOOL)])


def test_mismatch_reports_position():
    with pytest.raises(TypeMismatch) as info:
        unify([TyLe(BOOL, NAT, origin=(3, 4))])
    assert info.value.pos == (3, 4)


def test_expansion_substitutes_the_whole_skeleton():
    sigma, c = unify([TyLe(A[1], A[2]), TyLe(A[2], arrow(A[3], A[4]))], Fresh(20))
    assert isinstance(sigma.apply(A[1]), Arrow) and isinstance(sigma.apply(A[2]), Arrow)
    assert is_unified(c)


def test_row_expansion_example_is_preserved():
    a1, a2 = TyVar(1), TyVar(2)
    d1, d2 = DirtVar(3), DirtVar(4, frozenset({"op"}))
    ks = [TyLe(Arrow(a1, Dirty(NAT, Row((), d1))), a2),
          DirtRowLe(Row((("op", RegionVar(5, True)),), d2), Row((), d1))]
    from effc.surface import parse_program
    from effc.testkit import Universe
    sig = parse_program("effect e { op : unit -> unit }\ninstance i : e").signature
    assert unify_check(ks, Universe(sig, grounds=(NAT,), dirts_in_types=(frozenset(),)),
                       Fresh(10))


def _random_sets():
    return st.integers(0, 10_000).map(lambda s: ConstraintGen(random.Random(s)).constraints(1, 5))


@settings(max_examples=150, deadline=None)
@given(_random_sets())
def test_output_is_unified_and_atomic(ks):
    try:
        sigma, c = unify(ks, Fresh(100))
    except UnificationError:
        return
    assert all(isinstance(k, ATOMIC_TYPES) for k in c.atoms())
    assert is_unified(c)
    # rows in the substitution list exactly ops their rest hides
    for row in sigma.dirt.values():
        assert row.op_names <= row.rest.hidden


@settings(max_examples=150, deadline=None)
@given(_random_sets())
def test_unify_is_deterministic(ks):
    def go():
        try:
            sigma, c = unify(ks, Fresh(100))
        except UnificationError as err:
            return type(err).__name__
        return sorted(map(str, c.atoms())), sorted((str(a), str(t)) for a, t in sigma.ty.items())
    assert go() == go()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_solutions_preserved_on_random_sets(seed):
    ks = ConstraintGen(random.Random(seed)).constraints(1, 3)
    try:
        assert unify_check(ks, small_universe(), Fresh(100))
    except BudgetExceeded:
        pass
