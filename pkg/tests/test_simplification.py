from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from effc.closed_types import satisfies
from effc.errors import BudgetExceeded, NotUnified, UnificationError
from effc.inference import type_toplevel
from effc.surface import TopLet, parse_expression, parse_program
from effc.syntax import (
    UNIT, Arrow, Dirty, DirtVar, Fresh, InstIn, RegionLe, RegionVar, Row, TyLe, TyVar,
)
from effc.simplification import (
    finalize_regions, gc, negative, polarity, positive, simplify_regions, witness_solution,
)
from effc.testkit import types_set
from effc.unification import ConstraintSet, is_unified, unify

from gen import ConstraintGen, small_universe
from support import WELLTYPED, load

R1, R2 = RegionVar(1), RegionVar(2)
STAR = RegionVar(3, True)


def strs(cset):
    return sorted(str(k) for k in cset.atoms())


def test_polarity_of_an_arrow():
    f = Arrow(TyVar(1), Dirty(TyVar(2), Row((), DirtVar(3))))
    assert positive(f) == {2, 3} and negative(f) == {1}


def test_context_flips_polarity():
    f = Arrow(TyVar(1), Dirty(TyVar(2), Row((), DirtVar(3))))
    pn = polarity(f, {"x": TyVar(5), "g": f}, ConstraintSet())
    assert pn.N == {1, 5, 2, 3} and pn.P == {2, 3, 1}


def test_polarity_adds_handled_of_positive_covers():
    pn = polarity(Row((("op", R2),), DirtVar(4, frozenset({"op"}))), [],
                  ConstraintSet.from_constraints([InstIn("ins", R2, frozenset({STAR}))]))
    assert STAR.id in pn.P and STAR.id not in pn.base_positive


def test_compose_polarity():
    sig = parse_program("").signature
    e = parse_expression("fun f -> val (fun g -> val (fun x -> let y = f x in g y))", sig)
    t = type_toplevel(e, sig, {}, Fresh())
    f_ty = t.ty.dom
    assert f_ty.dom.id in t.polarity.P and f_ty.cod.ty.id in t.polarity.N


def test_gc_empty():
    pn = polarity(UNIT, [], ConstraintSet())
    assert len(gc(ConstraintSet(), pn)) == 0


def test_gc_keeps_negative_to_positive_only():
    a, b, c = TyVar(1), TyVar(2), TyVar(3)
    cset = ConstraintSet.from_constraints([TyLe(a, b), TyLe(b, c)])
    ty = Arrow(a, Dirty(c, Row((), DirtVar(4))))
    out = gc(cset, polarity(ty, [], cset))
    assert "α1 ≤ α3" in strs(out) and not any("α2" in s for s in strs(out))


def test_gc_keeps_instances_on_positive_regions():
    cset = ConstraintSet.from_constraints([InstIn("ins", STAR), InstIn("ins", RegionVar(7, True))])
    from effc.syntax import EffTy
    out = gc(cset, polarity(EffTy("E", STAR), [], cset))
    assert strs(out) == ["ins ∈ ρ*3"]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_gc_is_idempotent_and_unified(seed):
    g = ConstraintGen(random.Random(seed))
    ks, ty = g.constraints(), g.ty()
    try:
        sigma, c = unify(ks, Fresh(100))
    except UnificationError:
        return
    t = sigma.apply(ty)
    pn = polarity(t, [], c)
    once = gc(c, pn)
    assert is_unified(once)
    assert strs(gc(once, pn)) == strs(once)


@pytest.mark.parametrize("seed", range(30))
def test_gc_preserves_the_types_set(seed):
    g = ConstraintGen(random.Random(seed))
    ks, ty = g.constraints(), g.ty()
    try:
        sigma, c = unify(ks, Fresh(100))
    except UnificationError:
        pytest.skip("no unifier")
    t = sigma.apply(ty)
    u = small_universe()
    try:
        assert types_set(t, c, u) == types_set(t, gc(c, polarity(t, [], c)), u)
    except BudgetExceeded:
        pytest.skip("over budget")


def test_non_singleton_handled_region_is_dropped():
    cset = ConstraintSet.from_constraints([InstIn("ins", STAR), InstIn("ins2", STAR),
                                           RegionLe(R1, R2, frozenset({STAR}))])
    assert strs(simplify_regions(cset)) == ["ins ∈ ρ*3", "ins2 ∈ ρ*3", "ρ1 ≤ ρ2"]


def test_subsumed_instance_constraint_is_dropped():
    other = RegionVar(4, True)
    cset = ConstraintSet.from_constraints([InstIn("ins", R1, frozenset({STAR})),
                                           InstIn("ins", R1, frozenset({STAR, other}))])
    assert strs(simplify_regions(cset)) == ["ins ∈ ρ1 ∪· ρ*3"]


def test_finalize_discharges_instance_through_handled_region():
    cset = ConstraintSet.from_constraints([InstIn("std", STAR), InstIn("std", R2, frozenset({STAR}))])
    assert strs(simplify_regions(cset)) == ["std ∈ ρ*3", "std ∈ ρ2 ∪· ρ*3"]
    assert strs(finalize_regions(cset)) == ["std ∈ ρ*3"]


def test_witness_of_empty_set():
    w = witness_solution(ConstraintSet(), ty=Arrow(TyVar(1), Dirty(TyVar(2), Row((), DirtVar(3)))))
    assert w.ty == {1: UNIT, 2: UNIT} and w.dirt == {3: frozenset()}


def test_witness_grows_regions_from_instances():
    cset = ConstraintSet.from_constraints([InstIn("ins", STAR), RegionLe(STAR, R2)])
    w = witness_solution(cset)
    assert w.reg[3] == {"ins"} and w.reg[2] == {"ins"}
    assert all(satisfies(w, k) for k in cset.atoms())


def test_witness_needs_unified_set():
    # inserted without closing, so α1 ≤ α3 is missing
    c = ConstraintSet()
    for a, b in ((1, 2), (2, 3)):
        c.register(TyVar(a))
        c.register(TyVar(b))
        c.merge(TyVar(a), TyVar(b))
        c.insert(TyLe(TyVar(a), TyVar(b)))
    with pytest.raises(NotUnified):
        witness_solution(c)


def _corpus_finals():
    for path in WELLTYPED:
        p = load(path)
        fresh, xi = Fresh(), {}
        for d in p.bindings():
            if isinstance(d, TopLet):
                t = type_toplevel(d.value, p.signature, xi, fresh)
                xi[d.name] = t.scheme
            elif hasattr(d, "as_value"):
                t = type_toplevel(d.as_value(), p.signature, xi, fresh)
                xi[d.name] = t.scheme
            else:
                t = type_toplevel(d.comp, p.signature, xi, fresh)
            yield path.rsplit("/", 1)[-1], t, p.signature


@pytest.mark.parametrize("name, t, sig", list(_corpus_finals()),
                         ids=lambda v: v if isinstance(v, str) else "")
def test_witness_satisfies_corpus_finals(name, t, sig):
    w = witness_solution(t.final, sig, t.ty)
    assert all(satisfies(w, k) for k in t.final.atoms())
