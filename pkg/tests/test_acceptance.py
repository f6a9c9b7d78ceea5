"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL
line at the end of the pytest run (see conftest.py).  Also runnable as a
script: `python3 tests/test_acceptance.py`."""

from __future__ import annotations

import contextlib
import random
import time

import pytest

from effc.cli import CliConfig, Session, run_source
from effc.closed_types import ClosedChecker, apply_closed, check_closed
from effc.display import DisplayConfig, display_scheme
from effc.errors import BudgetExceeded, EffcError, OccursCycle, TypeMismatch, UnificationError
from effc.evaluator import FinalOpCall, StuckOutcome, Value, outcome_term, run
from effc.inference import Inferencer, type_toplevel, wrap_letvals
from effc.simplification import gc, polarity, witness_solution
from effc.surface import parse_computation, parse_expression, parse_program
from effc.syntax import (
    BOOL, NAT, UNIT, Arrow, DirtRowLe, Dirty, DirtVar, Fresh, RegionVar, Row, TyLe, TyVar,
    alpha_equal, iter_params,
)
from effc.testkit import Universe, guided_hints, types_set, unify_check
from effc.unification import is_unified, unify

from gen import ConstraintGen, small_universe
from support import ILLTYPED, WELLTYPED, chain, load, match_up_to_renaming, run_directives

RESULTS: dict[int, tuple[str, str]] = {}

TITLES = {
    1: "compose pipeline goldens",
    2: "unification trace golden",
    3: "counting handler display",
    4: "reference handler reduction",
    5: "safety over the well-typed corpus",
    6: "unify preserves solutions",
    7: "gc preserves types",
    8: "inference matches bounded checking",
    9: "ill-typed corpus fails only on types",
}


@contextlib.contextmanager
def criterion(n: int):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException as err:
        RESULTS[n] = ("FAIL", f"{type(err).__name__}: {err}"[:200])
        raise
    RESULTS[n] = ("PASS", f"{time.perf_counter() - t0:.2f} s")


def summary_lines() -> list[str]:
    lines = []
    for n in sorted(TITLES):
        status, detail = RESULTS.get(n, ("NOT RUN", ""))
        lines.append(f"criterion {n} ({TITLES[n]}): {status}" + (f"  [{detail}]" if detail else ""))
    return lines


COMPOSE = "letval compose = fun f -> val (fun g -> val (fun x -> let y = f x in g y))"


def _polar_items(t) -> list[str]:
    params = {p.id: p for p in iter_params(t.ty)}
    items = [f"N {params[i]}" for i in t.polarity.negative if i in params]
    items += [f"P {params[i]}" for i in t.polarity.positive if i in params]
    return items


def test_criterion_1_compose_goldens():
    with criterion(1):
        t0 = time.perf_counter()
        program = parse_program(COMPOSE)
        t = type_toplevel(program.decls[0].value, program.signature, {}, Fresh())
        shown = display_scheme(t.ty, t.final, DisplayConfig())
        elapsed = time.perf_counter() - t0

        actual = [f"type {t.raw_ty}"] + [f"raw {k}" for k in t.raw]
        actual += [f"σ {a} = {img}" for a, img in t.sigma.ty.items()]
        actual += [f"σ {DirtVar(d)} = {row}" for d, row in t.sigma.dirt.items()]
        actual += [f"unified {k}" for k in t.unified.atoms()]
        actual += _polar_items(t)
        actual += [f"gc {k}" for k in t.collected.atoms()]
        expected = ["type (αf -> (αg -> (αx -> α2 ! δ3) ! δ4) ! δ5)",
                    "raw αf ≤ (αx -> α1 ! δ1)", "raw αg ≤ (αy -> α2 ! δ2)",
                    "raw α1 ≤ αy", "raw δ1 ≤ δ3", "raw δ2 ≤ δ3",
                    "σ αf = (α3 -> α4 ! δ6)", "σ αg = (α5 -> α6 ! δ7)"]
        expected += [f"unified {k}" for k in ["αx ≤ α3", "α6 ≤ α2"]
                     + chain("α4", "α1", "αy", "α5") + chain("δ6", "δ1", "δ3")
                     + chain("δ7", "δ2", "δ3")]
        expected += [f"N {p}" for p in ("αx", "α4", "α6", "δ6", "δ7")]
        expected += [f"P {p}" for p in ("α2", "α3", "α5", "δ3", "δ4", "δ5")]
        expected += [f"gc {k}" for k in ("αx ≤ α3", "α4 ≤ α5", "α6 ≤ α2", "δ6 ≤ δ3", "δ7 ≤ δ3")]
        assert match_up_to_renaming(actual, expected) is not None, "\n".join(actual)
        assert shown == "(α →_δ β) → (β →_δ′ γ) → (α →_{δ∪δ′} γ)"
        assert elapsed < 1.0


def _unify_example():
    a1, a2 = TyVar(1), TyVar(2)
    d1, d2 = DirtVar(3), DirtVar(4, frozenset({"op"}))
    r1 = RegionVar(5, inhabited=True)
    return [TyLe(Arrow(a1, Dirty(NAT, Row((), d1))), a2),
            DirtRowLe(Row((("op", r1),), d2), Row((), d1))]


def test_criterion_2_unify_trace_golden():
    with criterion(2):
        states = []
        sigma, cset = unify(_unify_example(), Fresh(10), tracer=lambda *s: states.append(s))
        actual = [f"σ {a} = {img}" for a, img in sigma.ty.items()]
        actual += [f"σ {DirtVar(d)} = {row}" for d, row in sigma.dirt.items()]
        actual += [f"C {k}" for k in cset.atoms()]
        expected = ["σ α2 = (α3 -> nat ! {op: ρ3 | δ5})", "σ δ1 = {op: ρ2 | δ4}",
                    "σ δ3 = {op: ρ3 | δ5}"]
        expected += [f"C {k}" for k in ["α3 ≤ α1"] + chain("ρ1", "ρ2", "ρ3")
                     + chain("δ2", "δ4", "δ5")]
        assert match_up_to_renaming(actual, expected) is not None, "\n".join(actual)
        assert len(states) == 10
        assert not states[-1][2] and states[0][1].atoms() == []

        # the same count through the command-line session
        session = Session(CliConfig(trace_unify=True))
        out: list[str] = []
        src = ("effect e { op : unit -> unit }\ninstance i : e\n"
               "letval f = fun x -> val x")
        run_source(src, session, out, evaluate=False)
        assert out[0].startswith("unify: ") and out[0].endswith(" states")


COUNT_PRINT = """\
effect channel { print : nat -> unit }
instance std : channel
letval count_print = fun c -> val (handler
  | val x -> val 0
  | c#print y k -> let n = k () in val (succ n))
run let h = count_print std in with h handle std#print 0
"""


def test_criterion_3_counting_handler_display():
    with criterion(3):
        session = Session(CliConfig())
        out: list[str] = []
        code = run_source(COUNT_PRINT, session, out, evaluate=False)
        assert code == 0
        assert out == ["count_print : channel^ρ → (α ⇒[print: ∸ρ] nat)", "- : nat ! ∅"]


STATE_HANDLER = ("(handler | val x -> r#update x | r#lookup x k -> k (succ 0) "
                 "| r#update x k -> k ())")
STATE_TRACE = [
    "with H handle let x1 = (let x2 = r#lookup () in r#update x2) in val 0",
    "with H handle let x1 = (let x2 = r#lookup((); y1. val y1) in r#update x2) in val 0",
    "with H handle let x1 = r#lookup((); y1. let x2 = val y1 in r#update x2) in val 0",
    "with H handle r#lookup((); y1. let x1 = (let x2 = val y1 in r#update x2) in val 0)",
    "(fun y1 -> with H handle (let x1 = (let x2 = val y1 in r#update x2) in val 0)) 1",
    "with H handle (let x1 = (let x2 = val 1 in r#update x2) in val 0)",
    "with H handle (let x1 = r#update 1 in val 0)",
    "with H handle (let x1 = r#update(1; y2. val y2) in val 0)",
    "with H handle r#update(1; y2. let x1 = val y2 in val 0)",
    "(fun y2 -> with H handle (let x1 = val y2 in val 0)) ()",
    "with H handle (let x1 = val () in val 0)",
    "with H handle val 0",
    "r#update 0",
    "r#update(0; y3. val y3)",
]


def test_criterion_4_reference_handler_reduction():
    with criterion(4):
        sig = parse_program("effect ref { lookup : unit -> nat, update : nat -> unit }\n"
                            "instance r : ref").signature
        terms = [parse_computation(s.replace("H", STATE_HANDLER), sig) for s in STATE_TRACE]
        outcome, trace = run(terms[0], fuel=50, trace=True)
        assert isinstance(outcome, FinalOpCall)
        assert outcome.steps == 13
        assert (outcome.ins, outcome.op) == ("r", "update")
        assert alpha_equal(outcome_term(outcome), terms[-1])
        assert len(trace) == 14
        for i, (got, want) in enumerate(zip(trace, terms)):
            assert alpha_equal(got, want), f"step {i}"


def safety_report() -> list[tuple[str, str]]:
    failures = []
    for path in WELLTYPED:
        program = load(path)
        sig = program.signature
        for values, d in run_directives(program):
            c0 = wrap_letvals(values, d.comp)
            t = type_toplevel(c0, sig, {}, Fresh())
            w = apply_closed(witness_solution(t.final, sig, t.ty), t.ty)
            outcome, trace = run(c0, fuel=1000, trace=True)
            if isinstance(outcome, StuckOutcome):
                failures.append((path, f"stuck: {outcome.reason}"))
            elif not isinstance(outcome, (Value, FinalOpCall)):
                failures.append((path, "out of fuel"))
            elif isinstance(outcome, FinalOpCall) and (outcome.ins, outcome.op) not in w.dirt:
                failures.append((path, f"{outcome.ins}#{outcome.op} outside {w}"))
            for i, c in enumerate(trace):
                hints, _ = guided_hints(c, sig)
                if not ClosedChecker(sig, candidates=[], hints=hints).check({}, c, w):
                    failures.append((path, f"step {i} does not check at {w}"))
                    break
    return failures


def test_criterion_5_safety():
    with criterion(5):
        t0 = time.perf_counter()
        assert len(WELLTYPED) >= 30
        failures = safety_report()
        assert failures == []
        assert time.perf_counter() - t0 < 60


def sets_within_budget(count: int, accept):
    """Feed seeded random constraint sets to `accept` until `count` of them fit
    the oracle budget; returns the seeds that failed."""
    done, seed, bad = 0, 0, []
    while done < count:
        try:
            verdict = accept(seed)
        except BudgetExceeded:
            verdict = None
        if verdict is not None:
            done += 1
            if not verdict:
                bad.append(seed)
        seed += 1
    return bad


def test_criterion_6_unify_preservation():
    with criterion(6):
        t0 = time.perf_counter()
        u = small_universe()

        def accept(seed):
            ks = ConstraintGen(random.Random(seed)).constraints()
            return unify_check(ks, u, Fresh(100))

        assert sets_within_budget(200, accept) == []
        assert time.perf_counter() - t0 < 300


def test_criterion_7_gc_preservation():
    with criterion(7):
        t0 = time.perf_counter()
        u = small_universe()

        def accept(seed):
            g = ConstraintGen(random.Random(seed))
            ks, ty = g.constraints(), g.ty()
            try:
                sigma, cset = unify(ks, Fresh(100))
            except UnificationError:
                return None
            ty = sigma.apply(ty)
            collected = gc(cset, polarity(ty, [], cset))
            return (is_unified(collected)
                    and types_set(ty, cset, u) == types_set(ty, collected, u))

        assert sets_within_budget(200, accept) == []
        assert time.perf_counter() - t0 < 300


TINY_TERMS = [
    ("c", "val ()"), ("e", "()"), ("e", "true"), ("e", "fun x -> val x"),
    ("c", "val (fun x -> val x)"), ("e", "std"), ("c", "val std"),
    ("c", "std#print(0; y. val y)"), ("c", "std#print 0"), ("e", "fun x -> std#print x"),
    ("e", "handler | val x -> val x | std#print n k -> k ()"),
    ("e", "handler | val x -> val 0 | std#print n k -> k ()"),
    ("c", "iszero 0"), ("e", "fun b -> if b then val false else val true"),
]


def inference_vs_checking(kind: str, src: str, sig, u: Universe) -> tuple[frozenset, frozenset]:
    term = parse_expression(src, sig) if kind == "e" else parse_computation(src, sig)
    t = type_toplevel(term, sig, {}, Fresh())
    inferred = types_set(t.ty, t.final, u)
    cands = u.dirty_candidates() if kind == "c" else u.candidates
    checked = frozenset(T for T in cands
                        if check_closed({}, term, T, candidates=u.candidates, signature=sig))
    return inferred, checked


def test_criterion_8_soundness_completeness():
    with criterion(8):
        sig = parse_program("effect channel { print : nat -> unit }\n"
                            "instance std : channel").signature
        u = Universe(sig, grounds=(UNIT, BOOL, NAT), handlers=True)
        assert len(TINY_TERMS) >= 10
        for kind, src in TINY_TERMS:
            inferred, checked = inference_vs_checking(kind, src, sig, u)
            assert inferred, src
            assert inferred == checked, src
        # the raw constraints describe the same set whenever they fit the budget
        for kind, src in TINY_TERMS[:9]:
            term = parse_expression(src, sig) if kind == "e" else parse_computation(src, sig)
            inf = Inferencer(sig)
            res = inf.infer_expr({}, {}, term) if kind == "e" else inf.infer_comp({}, {}, term)
            _, checked = inference_vs_checking(kind, src, sig, u)
            assert types_set(res.ty, res.constraints, u) == checked, src


def test_criterion_9_failure_parity():
    with criterion(9):
        assert len(ILLTYPED) >= 20
        kinds = {}
        for path in ILLTYPED:
            program = load(path)
            xi, fresh, err = {}, Fresh(), None
            for d in program.bindings():
                term = getattr(d, "comp", None)
                if term is None:
                    term = d.value if hasattr(d, "value") else d.as_value()
                try:
                    t = type_toplevel(term, program.signature, xi, fresh)
                except EffcError as e:
                    err = e
                    break
                if t.scheme is not None:
                    xi[d.name] = t.scheme
            assert err is not None, f"{path} was accepted"
            kinds[path] = type(err)
        assert all(k in (TypeMismatch, OccursCycle) for k in kinds.values()), kinds


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]) or 0)
