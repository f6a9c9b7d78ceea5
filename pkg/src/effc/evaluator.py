"""Small-step operational semantics and a fueled driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .syntax import (
    Absurd, App, Computation, Expression, FalseLit, Fun, Handler, If, Inst, IsZero,
    Let, LetRec, LetVal, OpCall, Pred, Succ, TrueLit, UnitVal, Val, Var, With, Zero,
    free_vars, fresh_name, substitute,
)

DEFAULT_FUEL = 10000


@dataclass(frozen=True)
class Stepped:
    next: Computation


@dataclass(frozen=True)
class IsValue:
    value: Expression


@dataclass(frozen=True)
class IsOpCall:
    ins: str
    op: str
    arg: Expression
    binder: str
    body: Computation


@dataclass(frozen=True)
class Stuck:
    reason: str


StepResult = Union[Stepped, IsValue, IsOpCall, Stuck]


@dataclass(frozen=True)
class Value:
    value: Expression
    steps: int = field(default=0, compare=False)


@dataclass(frozen=True)
class FinalOpCall:
    ins: str
    op: str
    arg: Expression
    binder: str
    body: Computation
    steps: int = field(default=0, compare=False)

    def as_computation(self) -> OpCall:
        return OpCall(Inst(self.ins), self.op, self.arg, self.binder, self.body)


@dataclass(frozen=True)
class OutOfFuel:
    comp: Computation
    steps: int = field(default=0, compare=False)


@dataclass(frozen=True)
class StuckOutcome:
    reason: str
    steps: int = field(default=0, compare=False)


Outcome = Union[Value, FinalOpCall, OutOfFuel, StuckOutcome]


def _rebind_call(ins: str, op: str, arg: Expression, y: str, body: Computation,
                 wrap) -> OpCall:
    """Build ins#op(arg; y. wrap(body)) keeping y from capturing wrap's free names."""
    extra = free_vars(wrap(Val(UnitVal())))
    if y in extra:
        y2 = fresh_name(y, extra | free_vars(body))
        body = substitute(body, {y: Var(y2)})
        y = y2
    return OpCall(Inst(ins), op, arg, y, wrap(body))


def step(c: Computation) -> StepResult:
    """One reduction step of the small-step relation."""
    if isinstance(c, If):
        if isinstance(c.cond, TrueLit):
            return Stepped(c.then)
        if isinstance(c.cond, FalseLit):
            return Stepped(c.else_)
        return Stuck("if: condition is not a boolean")
    if isinstance(c, IsZero):
        if isinstance(c.arg, Zero):
            return Stepped(Val(TrueLit()))
        if isinstance(c.arg, Succ):
            return Stepped(Val(FalseLit()))
        return Stuck("iszero: argument is not a numeral")
    if isinstance(c, Pred):
        if isinstance(c.arg, Zero):
            return Stepped(Val(Zero()))
        if isinstance(c.arg, Succ):
            return Stepped(Val(c.arg.arg))
        return Stuck("pred: argument is not a numeral")
    if isinstance(c, Absurd):
        return Stuck("absurd: no value of type empty")
    if isinstance(c, App):
        if isinstance(c.fn, Fun):
            return Stepped(substitute(c.fn.body, {c.fn.binder: c.arg}))
        return Stuck("application of a non-function")
    if isinstance(c, Val):
        return IsValue(c.arg)
    if isinstance(c, OpCall):
        if isinstance(c.inst, Inst):
            return IsOpCall(c.inst.name, c.op, c.arg, c.binder, c.body)
        return Stuck("operation call on a non-instance")
    if isinstance(c, Let):
        r = step(c.bound)
        if isinstance(r, Stepped):
            return Stepped(Let(c.binder, r.next, c.body))
        if isinstance(r, IsValue):
            return Stepped(substitute(c.body, {c.binder: r.value}))
        if isinstance(r, IsOpCall):
            return Stepped(_rebind_call(r.ins, r.op, r.arg, r.binder, r.body,
                                        lambda k: Let(c.binder, k, c.body)))
        return r
    if isinstance(c, LetVal):
        return Stepped(substitute(c.body, {c.binder: c.value}))
    if isinstance(c, LetRec):
        unfolded = Fun(c.param, LetRec(c.fun, c.param, c.fun_body, c.fun_body))
        return Stepped(substitute(c.body, {c.fun: unfolded}))
    if isinstance(c, With):
        r = step(c.body)
        if isinstance(r, Stepped):
            return Stepped(With(c.handler, r.next))
        if isinstance(r, Stuck):
            return r
        h = c.handler
        if not isinstance(h, Handler):
            return Stuck("handling with a non-handler")
        if isinstance(r, IsValue):
            return Stepped(substitute(h.value_body, {h.value_binder: r.value}))
        for case in h.cases:
            if not isinstance(case.inst, Inst):
                return Stuck("handler case on a non-instance")
            if case.inst.name == r.ins and case.op == r.op:
                k = Fun(r.binder, With(h, r.body))
                return Stepped(substitute(case.body, {case.param: r.arg, case.cont: k}))
        return Stepped(_rebind_call(r.ins, r.op, r.arg, r.binder, r.body,
                                    lambda k: With(h, k)))
    raise TypeError(f"not a computation: {c!r}")


def run(c: Computation, fuel: int = DEFAULT_FUEL, trace: bool = False
        ) -> tuple[Outcome, list[Computation]]:
    """Step c at most `fuel` times; the trace starts with c itself."""
    if fuel < 1:
        raise ValueError("fuel must be positive")
    steps = 0
    seen: list[Computation] = [c] if trace else []
    while True:
        r = step(c)
        if isinstance(r, IsValue):
            return Value(r.value, steps=steps), seen
        if isinstance(r, IsOpCall):
            return FinalOpCall(r.ins, r.op, r.arg, r.binder, r.body, steps=steps), seen
        if isinstance(r, Stuck):
            return StuckOutcome(r.reason, steps=steps), seen
        if steps == fuel:
            return OutOfFuel(c, steps=steps), seen
        c = r.next
        steps += 1
        if trace:
            seen.append(c)


def outcome_term(o: Outcome) -> Computation | None:
    """The terminal computation of an outcome, when it has one."""
    if isinstance(o, Value):
        return Val(o.value)
    if isinstance(o, FinalOpCall):
        return o.as_computation()
    if isinstance(o, OutOfFuel):
        return o.comp
    return None
