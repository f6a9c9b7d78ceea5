from __future__ import annotations

import pytest

from effc.evaluator import (
    FinalOpCall, IsOpCall, IsValue, OutOfFuel, Stepped, Stuck, StuckOutcome, Value,
    outcome_term, run, step,
)
from effc.inference import wrap_letvals
from effc.surface import parse_computation, parse_program
from effc.syntax import (
    Handler, If, Inst, Let, OpCall, TrueLit, UnitVal, Val, Var, With, Zero, alpha_equal,
)

from support import WELLTYPED, load, run_directives

SIG = parse_program("effect ref { lookup : unit -> nat, update : nat -> unit }\n"
                    "instance r : ref").signature


def test_if_true_steps_to_then_branch():
    c1, c2 = Val(Zero()), Val(UnitVal())
    assert step(If(TrueLit(), c1, c2)) == Stepped(c1)


def test_let_over_call_moves_the_let_inside():
    call = OpCall(Inst("r"), "lookup", UnitVal(), "y", Val(Var("y")))
    r = step(Let("x", call, Val(Var("x"))))
    assert isinstance(r, Stepped)
    assert alpha_equal(r.next, OpCall(Inst("r"), "lookup", UnitVal(), "y",
                                      Let("x", Val(Var("y")), Val(Var("x")))))


def test_unhandled_call_passes_through_handler():
    h = Handler("x", Val(Var("x")))
    call = OpCall(Inst("r"), "update", Zero(), "y", Val(Var("y")))
    r = step(With(h, call))
    assert isinstance(r, Stepped)
    assert alpha_equal(r.next, OpCall(Inst("r"), "update", Zero(), "y", With(h, Val(Var("y")))))


def test_terminal_results():
    assert isinstance(step(Val(Zero())), IsValue)
    assert isinstance(step(OpCall(Inst("r"), "lookup", UnitVal(), "y", Val(Var("y")))), IsOpCall)
    assert isinstance(step(If(Zero(), Val(Zero()), Val(Zero()))), Stuck)


def test_run_value():
    outcome, trace = run(Val(Zero()), fuel=10)
    assert outcome == Value(Zero()) and trace == []


def test_generic_and_explicit_calls_agree():
    h = "handler | r#lookup x k -> k 1"
    outs = []
    for c in ("let y = r#lookup () in val y", "r#lookup((); y. val y)"):
        bare, _ = run(parse_computation(c, SIG))
        assert isinstance(bare, FinalOpCall) and (bare.ins, bare.op) == ("r", "lookup")
        handled, _ = run(parse_computation(f"with ({h}) handle {c}", SIG))
        outs.append(handled)
    assert outs[0] == outs[1] == Value(parse_computation("val 1").arg)


def test_fuel_bounds_divergence():
    p = parse_program("letrec loop x = loop x\nrun loop ()")
    (values, d), = run_directives(p)
    outcome, _ = run(wrap_letvals(values, d.comp), fuel=25)
    assert isinstance(outcome, OutOfFuel) and outcome.steps == 25
    with pytest.raises(ValueError):
        run(Val(Zero()), fuel=0)


def test_stuck_is_reported():
    outcome, _ = run(parse_computation("let x = val true in pred x"))
    assert isinstance(outcome, StuckOutcome)


def test_trace_starts_with_the_input():
    c = parse_computation("let x = val 0 in val x")
    outcome, trace = run(c, trace=True)
    assert trace[0] is c and len(trace) == outcome.steps + 1


def _corpus_runs():
    for path in WELLTYPED:
        for values, d in run_directives(load(path)):
            yield path.rsplit("/", 1)[-1], wrap_letvals(values, d.comp)


CORPUS_RUNS = list(_corpus_runs())


@pytest.mark.parametrize("name, comp", CORPUS_RUNS, ids=[n for n, _ in CORPUS_RUNS])
def test_let_behaves_as_trivial_handler(name, comp):
    via_let, _ = run(Let("z", comp, Val(Var("z"))), fuel=2000)
    via_handler, _ = run(With(Handler("z", Val(Var("z"))), comp), fuel=2000)
    assert type(via_let) is type(via_handler)
    if isinstance(via_let, Value):
        assert alpha_equal(Val(via_let.value), Val(via_handler.value))
    elif isinstance(via_let, FinalOpCall):
        assert (via_let.ins, via_let.op) == (via_handler.ins, via_handler.op)


@pytest.mark.parametrize("name, comp", CORPUS_RUNS, ids=[n for n, _ in CORPUS_RUNS])
def test_each_step_has_one_outcome(name, comp):
    # determinism: stepping the same term twice yields the same result
    _, trace = run(comp, fuel=1000, trace=True)
    for c in trace:
        assert step(c) == step(c)
