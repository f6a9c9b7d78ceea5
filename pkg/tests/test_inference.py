from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from effc.errors import OccursCycle, TypeMismatch, UnboundVariable
from effc.inference import PipelineOptions, infer_comp, infer_expr, type_toplevel, wrap_letvals
from effc.surface import TopLet, parse_computation, parse_expression, parse_program
from effc.syntax import (
    Arrow, EffTy, Fresh, InstIn, LetVal, UNIT, free_params, iter_params,
)
from effc.closed_types import apply_closed, check_closed
from effc.simplification import witness_solution

from support import WELLTYPED, load, match_up_to_renaming, run_directives

SIG = parse_program("effect channel { print : nat -> unit }\ninstance std : channel").signature


def _expr(src):
    return infer_expr({}, {}, parse_expression(src, SIG), SIG)


def _comp(src):
    return infer_comp({}, {}, parse_computation(src, SIG), SIG)


def test_instance_constant():
    r = _expr("std")
    assert isinstance(r.ty, EffTy) and r.ty.region.inhabited
    assert r.constraints == [InstIn("std", r.ty.region)]
    assert set(r.fresh) == {r.ty.region.id}


def test_identity_function():
    r = _expr("fun x -> val x")
    assert isinstance(r.ty, Arrow) and r.ty.dom == r.ty.cod.ty
    assert r.constraints == []
    assert {q.id for q in free_params(r.ty)} == set(r.fresh)


def test_value_computation():
    r = _comp("val ()")
    assert r.ty.ty == UNIT and not r.ty.row.ops
    assert r.constraints == []


def test_operation_call_constraints():
    r = _comp("std#print(0; y. val y)")
    items = [f"ty {r.ty}"] + [str(k) for k in r.constraints]
    expected = ["ty unit ! {print: ρ3 | δ5}", "std ∈ ρ1", "channel^ρ1 ≤ channel^ρ4",
                "nat ≤ nat", "ρ4 ≤ ρ3", "δ2 ≤ {print: ρ3 | δ5}"]
    assert match_up_to_renaming(items, expected) is not None, items


def test_counting_handler_constraints():
    src = ("fun c -> val (handler | val x -> val 0"
           " | c#print y k -> let n = k () in val (succ n))")
    r = _expr(src)
    shown = [str(k) for k in r.constraints]
    assert any(s.startswith("(unit -> α") and "≤ (unit -> α" in s for s in shown)
    assert any("∪·" in s and s.startswith("ρ") for s in shown)


def test_compose_raw_constraints():
    r = _expr("fun f -> val (fun g -> val (fun x -> let y = f x in g y))")
    items = [f"ty {r.ty}"] + [str(k) for k in r.constraints]
    expected = ["ty (αf -> (αg -> (αx -> α2 ! δ3) ! δ4) ! δ5)",
                "αf ≤ (αx -> α1 ! δ1)", "αg ≤ (αy -> α2 ! δ2)", "α1 ≤ αy",
                "δ1 ≤ δ3", "δ2 ≤ δ3"]
    assert match_up_to_renaming(items, expected) is not None, items


def test_inference_is_deterministic():
    src = "fun f -> val (fun x -> let y = f x in f y)"
    a, b = _expr(src), _expr(src)
    assert str(a.ty) == str(b.ty)
    assert [str(k) for k in a.constraints] == [str(k) for k in b.constraints]


def test_unbound_variable():
    with pytest.raises(UnboundVariable):
        _comp("val z")


def test_let_polymorphism_through_letval():
    c = parse_computation("letval id = fun x -> val x in let a = id 0 in id true", SIG)
    t = type_toplevel(c, SIG, {}, Fresh())
    assert str(t.ty.ty) == "bool"


def test_monomorphic_lambda_binder_is_not_generalized():
    c = parse_computation("(fun id -> let a = id 0 in id true) (fun x -> val x)", SIG)
    with pytest.raises(TypeMismatch):
        type_toplevel(c, SIG, {}, Fresh())


def test_self_application_is_a_cycle():
    with pytest.raises(OccursCycle):
        type_toplevel(parse_expression("fun x -> x x", SIG), SIG, {}, Fresh())


def test_toplevel_schemes_are_instantiated_freshly():
    p = parse_program("letval id = fun x -> val x\nrun let a = id 0 in id true")
    fresh, xi = Fresh(), {}
    for d in p.bindings():
        if isinstance(d, TopLet):
            t = type_toplevel(d.value, p.signature, xi, fresh)
            xi[d.name] = t.scheme
        else:
            t = type_toplevel(d.comp, p.signature, xi, fresh)
    assert str(t.ty.ty) == "bool"


def test_wrap_letvals_keeps_only_needed_values():
    p = parse_program("letval a = 0\nletval b = succ a\nletval c = true\nrun val b")
    (values, d), = run_directives(p)
    c = wrap_letvals(values, d.comp)
    bound = []
    while isinstance(c, LetVal):
        bound.append(c.binder)
        c = c.body
    assert bound == ["a", "b"]


def test_gc_off_keeps_unified_set():
    e = parse_expression("fun f -> val (fun g -> val (fun x -> let y = f x in g y))", SIG)
    on = type_toplevel(e, SIG, {}, Fresh())
    off = type_toplevel(e, SIG, {}, Fresh(), PipelineOptions(gc=False))
    assert len(off.collected) == len(on.unified) > len(on.collected)


@pytest.mark.parametrize("path", WELLTYPED, ids=lambda p: p.rsplit("/", 1)[-1])
def test_corpus_bindings_type_quickly(path):
    """Garbage collection keeps every corpus binding well under a second."""
    import time
    p = load(path)
    fresh, xi = Fresh(), {}
    for d in p.bindings():
        t0 = time.perf_counter()
        if isinstance(d, TopLet):
            xi[d.name] = type_toplevel(d.value, p.signature, xi, fresh).scheme
        elif hasattr(d, "as_value"):
            xi[d.name] = type_toplevel(d.as_value(), p.signature, xi, fresh).scheme
        else:
            type_toplevel(d.comp, p.signature, xi, fresh)
        assert time.perf_counter() - t0 < 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["fun x -> val x", "fun f -> val (fun y -> f y)", "std",
                                 "fun c -> c#print 0", "true"]), min_size=2, max_size=4))
def test_sibling_fresh_sets_are_disjoint(parts):
    fresh = Fresh()
    seen: set = set()
    for src in parts:
        r = infer_expr({}, {}, parse_expression(src, SIG), SIG, fresh)
        ids = set(r.fresh)
        assert not ids & seen
        seen |= ids
        # every parameter of the result is fresh for this derivation
        assert {q.id for q in iter_params(r.ty)} <= ids


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["fun x -> val x", "fun f -> val (fun y -> f y)", "std",
                        "fun c -> c#print 0", "fun b -> if b then val 0 else val 1",
                        "handler | std#print n k -> k ()"]))
def test_least_witness_type_checks(src):
    e = parse_expression(src, SIG)
    t = type_toplevel(e, SIG, {}, Fresh())
    w = apply_closed(witness_solution(t.final, SIG, t.ty), t.ty)
    assert check_closed({}, e, w, signature=SIG)
