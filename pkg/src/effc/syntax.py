"""Abstract syntax shared by every stage: terms, closed and parametric types,
dirt rows, constraints and signatures.

All nodes are frozen dataclasses.  Source positions ride along on terms and
constraints but never take part in equality.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

Pos = Union[tuple[int, int], None]


def _pos():
    return field(default=None, kw_only=True, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Terms

@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class TrueLit:
    pos: Pos = _pos()


@dataclass(frozen=True)
class FalseLit:
    pos: Pos = _pos()


@dataclass(frozen=True)
class Zero:
    pos: Pos = _pos()


@dataclass(frozen=True)
class Succ:
    arg: "Expression"
    pos: Pos = _pos()


@dataclass(frozen=True)
class UnitVal:
    pos: Pos = _pos()


@dataclass(frozen=True)
class Fun:
    binder: str
    body: "Computation"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Inst:
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class OpCase:
    """One `e#op x k -> c` clause of a handler."""

    inst: "Expression"
    op: str
    param: str
    cont: str
    body: "Computation"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Handler:
    value_binder: str
    value_body: "Computation"
    cases: tuple[OpCase, ...] = ()
    pos: Pos = _pos()


Expression = Union[Var, TrueLit, FalseLit, Zero, Succ, UnitVal, Fun, Inst, Handler]


@dataclass(frozen=True)
class If:
    cond: Expression
    then: "Computation"
    else_: "Computation"
    pos: Pos = _pos()


@dataclass(frozen=True)
class IsZero:
    arg: Expression
    pos: Pos = _pos()


@dataclass(frozen=True)
class Pred:
    arg: Expression
    pos: Pos = _pos()


@dataclass(frozen=True)
class Absurd:
    arg: Expression
    pos: Pos = _pos()


@dataclass(frozen=True)
class App:
    fn: Expression
    arg: Expression
    pos: Pos = _pos()


@dataclass(frozen=True)
class Val:
    arg: Expression
    pos: Pos = _pos()


@dataclass(frozen=True)
class OpCall:
    inst: Expression
    op: str
    arg: Expression
    binder: str
    body: "Computation"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Let:
    binder: str
    bound: "Computation"
    body: "Computation"
    pos: Pos = _pos()


@dataclass(frozen=True)
class LetVal:
    binder: str
    value: Expression
    body: "Computation"
    pos: Pos = _pos()


@dataclass(frozen=True)
class LetRec:
    fun: str
    param: str
    fun_body: "Computation"
    body: "Computation"
    pos: Pos = _pos()


@dataclass(frozen=True)
class With:
    handler: Expression
    body: "Computation"
    pos: Pos = _pos()


Computation = Union[If, IsZero, Pred, Absurd, App, Val, OpCall, Let, LetVal, LetRec, With]
Term = Union[Expression, Computation]

EXPRESSION_TYPES = (Var, TrueLit, FalseLit, Zero, Succ, UnitVal, Fun, Inst, Handler)
COMPUTATION_TYPES = (If, IsZero, Pred, Absurd, App, Val, OpCall, Let, LetVal, LetRec, With)


def is_expression(t) -> bool:
    return isinstance(t, EXPRESSION_TYPES)


def numeral(n: int) -> Expression:
    e: Expression = Zero()
    for _ in range(n):
        e = Succ(e)
    return e


def nat_value(e) -> int | None:
    """Return n when e is succ^n 0, else None."""
    n = 0
    while isinstance(e, Succ):
        e = e.arg
        n += 1
    return n if isinstance(e, Zero) else None


def generic_effect(inst: Expression, op: str, x: str = "x", y: str = "y") -> Fun:
    """The generic effect `fun x -> inst#op(x; y. val y)`."""
    return Fun(x, OpCall(inst, op, Var(x), y, Val(Var(y))))


# ---------------------------------------------------------------------------
# Free variables, substitution, alpha-equivalence

def free_vars(t: Term) -> frozenset[str]:
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, (TrueLit, FalseLit, Zero, UnitVal, Inst)):
        return frozenset()
    if isinstance(t, (Succ, IsZero, Pred, Absurd, Val)):
        return free_vars(t.arg)
    if isinstance(t, Fun):
        return free_vars(t.body) - {t.binder}
    if isinstance(t, Handler):
        out = free_vars(t.value_body) - {t.value_binder}
        for case in t.cases:
            out |= free_vars(case.inst)
            out |= free_vars(case.body) - {case.param, case.cont}
        return out
    if isinstance(t, If):
        return free_vars(t.cond) | free_vars(t.then) | free_vars(t.else_)
    if isinstance(t, App):
        return free_vars(t.fn) | free_vars(t.arg)
    if isinstance(t, OpCall):
        return free_vars(t.inst) | free_vars(t.arg) | (free_vars(t.body) - {t.binder})
    if isinstance(t, Let):
        return free_vars(t.bound) | (free_vars(t.body) - {t.binder})
    if isinstance(t, LetVal):
        return free_vars(t.value) | (free_vars(t.body) - {t.binder})
    if isinstance(t, LetRec):
        return (free_vars(t.fun_body) - {t.fun, t.param}) | (free_vars(t.body) - {t.fun})
    if isinstance(t, With):
        return free_vars(t.handler) | free_vars(t.body)
    raise TypeError(f"not a term: {t!r}")


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    avoid = set(avoid)
    stem = base.rstrip("0123456789'") or "v"
    for i in itertools.count(1):
        cand = f"{stem}{i}"
        if cand not in avoid:
            return cand
    raise AssertionError("unreachable")


class _Subst:
    """Capture-avoiding simultaneous substitution of expressions for names."""

    def __init__(self, mapping: dict[str, Expression]):
        self.mapping = mapping
        self.mapping_fv: set[str] = set()
        for e in mapping.values():
            self.mapping_fv |= free_vars(e)

    def _enter(self, binders: list[str], body_fv: frozenset[str]):
        """Return (new_binders, inner_subst) for going under binders."""
        inner = {k: v for k, v in self.mapping.items() if k not in binders}
        renames: dict[str, str] = {}
        relevant_fv: set[str] = set()
        for k, v in inner.items():
            if k in body_fv:
                relevant_fv |= free_vars(v)
        avoid = set(relevant_fv) | set(body_fv) | set(inner) | set(binders)
        new_binders = []
        for b in binders:
            if b in relevant_fv:
                nb = fresh_name(b, avoid)
                avoid.add(nb)
                renames[b] = nb
                new_binders.append(nb)
            else:
                new_binders.append(b)
        for old, new in renames.items():
            inner[old] = Var(new)
        return new_binders, (_Subst(inner) if inner else None)

    def under(self, binders: list[str], body: Term):
        new_binders, inner = self._enter(binders, free_vars(body))
        return new_binders, (inner.go(body) if inner else body)

    def go(self, t: Term) -> Term:
        if isinstance(t, Var):
            return self.mapping.get(t.name, t)
        if isinstance(t, (TrueLit, FalseLit, Zero, UnitVal, Inst)):
            return t
        if isinstance(t, (Succ, IsZero, Pred, Absurd, Val)):
            return type(t)(self.go(t.arg), pos=t.pos)
        if isinstance(t, Fun):
            (b,), body = self.under([t.binder], t.body)
            return Fun(b, body, pos=t.pos)
        if isinstance(t, Handler):
            (vb,), vbody = self.under([t.value_binder], t.value_body)
            cases = []
            for case in t.cases:
                (p, k), body = self.under([case.param, case.cont], case.body)
                cases.append(OpCase(self.go(case.inst), case.op, p, k, body, pos=case.pos))
            return Handler(vb, vbody, tuple(cases), pos=t.pos)
        if isinstance(t, If):
            return If(self.go(t.cond), self.go(t.then), self.go(t.else_), pos=t.pos)
        if isinstance(t, App):
            return App(self.go(t.fn), self.go(t.arg), pos=t.pos)
        if isinstance(t, OpCall):
            (y,), body = self.under([t.binder], t.body)
            return OpCall(self.go(t.inst), t.op, self.go(t.arg), y, body, pos=t.pos)
        if isinstance(t, Let):
            (x,), body = self.under([t.binder], t.body)
            return Let(x, self.go(t.bound), body, pos=t.pos)
        if isinstance(t, LetVal):
            (x,), body = self.under([t.binder], t.body)
            return LetVal(x, self.go(t.value), body, pos=t.pos)
        if isinstance(t, LetRec):
            # f scopes over both bodies; x only over the function body
            fv_all = (free_vars(t.fun_body) - {t.param}) | free_vars(t.body)
            (f,), inner = self._enter([t.fun], fv_all)
            if inner is None:
                return t
            body = inner.go(t.body)
            (x,), fun_body = inner.under([t.param], t.fun_body)
            return LetRec(f, x, fun_body, body, pos=t.pos)
        if isinstance(t, With):
            return With(self.go(t.handler), self.go(t.body), pos=t.pos)
        raise TypeError(f"not a term: {t!r}")


def substitute(t: Term, mapping: dict[str, Expression]) -> Term:
    """Capture-avoiding simultaneous substitution t[mapping]."""
    if not mapping:
        return t
    return _Subst(dict(mapping)).go(t)


def _nameless(t: Term, env: tuple[str, ...]):
    """De Bruijn view of a term, used for alpha-equivalence."""

    def idx(name: str):
        for i in range(len(env) - 1, -1, -1):
            if env[i] == name:
                return ("bound", len(env) - 1 - i)
        return ("free", name)

    if isinstance(t, Var):
        return idx(t.name)
    if isinstance(t, (TrueLit, FalseLit, Zero, UnitVal)):
        return (type(t).__name__,)
    if isinstance(t, Inst):
        return ("Inst", t.name)
    if isinstance(t, (Succ, IsZero, Pred, Absurd, Val)):
        return (type(t).__name__, _nameless(t.arg, env))
    if isinstance(t, Fun):
        return ("Fun", _nameless(t.body, env + (t.binder,)))
    if isinstance(t, Handler):
        cases = tuple(
            (_nameless(c.inst, env), c.op, _nameless(c.body, env + (c.param, c.cont)))
            for c in t.cases
        )
        return ("Handler", _nameless(t.value_body, env + (t.value_binder,)), cases)
    if isinstance(t, If):
        return ("If", _nameless(t.cond, env), _nameless(t.then, env), _nameless(t.else_, env))
    if isinstance(t, App):
        return ("App", _nameless(t.fn, env), _nameless(t.arg, env))
    if isinstance(t, OpCall):
        return ("OpCall", _nameless(t.inst, env), t.op, _nameless(t.arg, env),
                _nameless(t.body, env + (t.binder,)))
    if isinstance(t, Let):
        return ("Let", _nameless(t.bound, env), _nameless(t.body, env + (t.binder,)))
    if isinstance(t, LetVal):
        return ("LetVal", _nameless(t.value, env), _nameless(t.body, env + (t.binder,)))
    if isinstance(t, LetRec):
        return ("LetRec", _nameless(t.fun_body, env + (t.fun, t.param)),
                _nameless(t.body, env + (t.fun,)))
    if isinstance(t, With):
        return ("With", _nameless(t.handler, env), _nameless(t.body, env))
    raise TypeError(f"not a term: {t!r}")


def alpha_equal(a: Term, b: Term) -> bool:
    return _nameless(a, ()) == _nameless(b, ())


# ---------------------------------------------------------------------------
# Ground types (shared by the closed and parametric worlds)

@dataclass(frozen=True)
class BoolT:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class NatT:
    def __str__(self) -> str:
        return "nat"


@dataclass(frozen=True)
class UnitT:
    def __str__(self) -> str:
        return "unit"


@dataclass(frozen=True)
class EmptyT:
    def __str__(self) -> str:
        return "empty"


BOOL, NAT, UNIT, EMPTY = BoolT(), NatT(), UnitT(), EmptyT()
GROUND_BY_NAME = {"bool": BOOL, "nat": NAT, "unit": UNIT, "empty": EMPTY}
Ground = Union[BoolT, NatT, UnitT, EmptyT]
GROUND_TYPES = (BoolT, NatT, UnitT, EmptyT)


# ---------------------------------------------------------------------------
# Closed types

@dataclass(frozen=True)
class CDirty:
    ty: "ClosedType"
    dirt: frozenset[tuple[str, str]] = frozenset()

    def __str__(self) -> str:
        ops = ", ".join(f"{i}#{o}" for i, o in sorted(self.dirt))
        return f"{self.ty} ! {{{ops}}}"


@dataclass(frozen=True)
class CArrow:
    dom: "ClosedType"
    cod: CDirty

    def __str__(self) -> str:
        return f"({self.dom} -> {self.cod})"


@dataclass(frozen=True)
class CEff:
    effect: str
    region: frozenset[str]

    def __post_init__(self):
        if not self.region:
            raise ValueError("effect type with an empty region")

    def __str__(self) -> str:
        return f"{self.effect}^{{{', '.join(sorted(self.region))}}}"


@dataclass(frozen=True)
class CHandler:
    inp: CDirty
    out: CDirty

    def __str__(self) -> str:
        return f"({self.inp} => {self.out})"


ClosedType = Union[BoolT, NatT, UnitT, EmptyT, CArrow, CEff, CHandler]


# ---------------------------------------------------------------------------
# Parameters and parametric types

@dataclass(frozen=True, order=True)
class TyVar:
    id: int

    def __str__(self) -> str:
        return f"α{self.id}"


@dataclass(frozen=True, order=True)
class RegionVar:
    id: int
    inhabited: bool = False

    def __str__(self) -> str:
        return f"ρ*{self.id}" if self.inhabited else f"ρ{self.id}"


@dataclass(frozen=True, order=True)
class DirtVar:
    id: int
    hidden: frozenset[str] = field(default=frozenset(), compare=False)

    def __str__(self) -> str:
        return f"δ{self.id}"


Param = Union[TyVar, RegionVar, DirtVar]


@dataclass(frozen=True)
class Row:
    """Dirt row {op1: ρ1, ... | δ^O}; ops are kept sorted by op name."""

    ops: tuple[tuple[str, RegionVar], ...]
    rest: DirtVar

    def __post_init__(self):
        ops = tuple(sorted(self.ops))
        object.__setattr__(self, "ops", ops)
        names = [o for o, _ in ops]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate op in row: {names}")
        if not set(names) <= self.rest.hidden:
            raise ValueError(f"row ops {names} not hidden from {self.rest}")

    @property
    def op_names(self) -> frozenset[str]:
        return frozenset(o for o, _ in self.ops)

    def region(self, op: str) -> RegionVar | None:
        for o, r in self.ops:
            if o == op:
                return r
        return None

    def __str__(self) -> str:
        if not self.ops:
            return str(self.rest)
        parts = ", ".join(f"{o}: {r}" for o, r in self.ops)
        return f"{{{parts} | {self.rest}}}"


@dataclass(frozen=True)
class Dirty:
    ty: "ParamType"
    row: Row

    def __str__(self) -> str:
        return f"{self.ty} ! {self.row}"


@dataclass(frozen=True)
class Arrow:
    dom: "ParamType"
    cod: Dirty

    def __str__(self) -> str:
        return f"({self.dom} -> {self.cod})"


@dataclass(frozen=True)
class EffTy:
    effect: str
    region: RegionVar

    def __str__(self) -> str:
        return f"{self.effect}^{self.region}"


@dataclass(frozen=True)
class HandlerTy:
    inp: Dirty
    out: Dirty

    def __str__(self) -> str:
        return f"({self.inp} => {self.out})"


ParamType = Union[TyVar, BoolT, NatT, UnitT, EmptyT, Arrow, EffTy, HandlerTy]


# ---------------------------------------------------------------------------
# Constraints

def _origin():
    return field(default=None, kw_only=True, compare=False, repr=False)


@dataclass(frozen=True)
class TyLe:
    lhs: ParamType
    rhs: ParamType
    origin: Pos = _origin()

    def __str__(self) -> str:
        return f"{self.lhs} ≤ {self.rhs}"


@dataclass(frozen=True)
class DirtyLe:
    lhs: Dirty
    rhs: Dirty
    origin: Pos = _origin()

    def __str__(self) -> str:
        return f"{self.lhs} ≤ {self.rhs}"


def _fmt_handled(handled: frozenset[RegionVar]) -> str:
    if not handled:
        return ""
    return " ∪· " + ", ".join(str(r) for r in sorted(handled))


@dataclass(frozen=True)
class RegionLe:
    lhs: RegionVar
    covering: RegionVar
    handled: frozenset[RegionVar] = frozenset()
    origin: Pos = _origin()

    def __post_init__(self):
        if not isinstance(self.handled, frozenset):
            object.__setattr__(self, "handled", frozenset(self.handled))
        if any(not r.inhabited for r in self.handled):
            raise ValueError("handled region parameters must be inhabited")

    def __str__(self) -> str:
        return f"{self.lhs} ≤ {self.covering}{_fmt_handled(self.handled)}"


@dataclass(frozen=True)
class InstIn:
    ins: str
    covering: RegionVar
    handled: frozenset[RegionVar] = frozenset()
    origin: Pos = _origin()

    def __post_init__(self):
        if not isinstance(self.handled, frozenset):
            object.__setattr__(self, "handled", frozenset(self.handled))
        if any(not r.inhabited for r in self.handled):
            raise ValueError("handled region parameters must be inhabited")

    def __str__(self) -> str:
        return f"{self.ins} ∈ {self.covering}{_fmt_handled(self.handled)}"


@dataclass(frozen=True)
class DirtLe:
    lhs: DirtVar
    rhs: DirtVar
    origin: Pos = _origin()

    def __str__(self) -> str:
        return f"{self.lhs} ≤ {self.rhs}"


@dataclass(frozen=True)
class DirtRowLe:
    lhs: Row
    rhs: Row
    origin: Pos = _origin()

    def __str__(self) -> str:
        return f"{self.lhs} ≤ {self.rhs}"


@dataclass(frozen=True)
class SkelEq:
    """Internal: both sides must share a skeleton (same shape)."""

    lhs: ParamType
    rhs: ParamType
    origin: Pos = _origin()

    def __str__(self) -> str:
        return f"{self.lhs} ≈ {self.rhs}"


Constraint = Union[TyLe, DirtyLe, RegionLe, InstIn, DirtLe, DirtRowLe, SkelEq]
ATOMIC_TYPES = (TyLe, RegionLe, InstIn, DirtLe)


# ---------------------------------------------------------------------------
# Signatures

@dataclass(frozen=True)
class Signature:
    effects: dict[str, dict[str, tuple[Ground, Ground]]] = field(default_factory=dict)
    instances: dict[str, str] = field(default_factory=dict)

    def op_effect(self, op: str) -> str | None:
        for eff, ops in self.effects.items():
            if op in ops:
                return eff
        return None

    def op_types(self, op: str) -> tuple[Ground, Ground]:
        eff = self.op_effect(op)
        if eff is None:
            raise KeyError(op)
        return self.effects[eff][op]

    def instances_of(self, effect: str) -> list[str]:
        return sorted(i for i, e in self.instances.items() if e == effect)

    def all_ops(self) -> list[tuple[str, str]]:
        return [(eff, op) for eff, ops in self.effects.items() for op in ops]


# ---------------------------------------------------------------------------
# Fresh parameter supply

class Fresh:
    """Monotone id counter shared by all parameter kinds in one run."""

    def __init__(self, start: int = 1):
        self.next_id = start

    def _take(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    def ty(self) -> TyVar:
        return TyVar(self._take())

    def region(self, inhabited: bool = False) -> RegionVar:
        return RegionVar(self._take(), inhabited)

    def dirt(self, hidden: Iterable[str] = ()) -> DirtVar:
        return DirtVar(self._take(), frozenset(hidden))

    def row(self) -> Row:
        return Row((), self.dirt())

    def bump_past(self, params: Iterable[Param]) -> None:
        for p in params:
            if p.id >= self.next_id:
                self.next_id = p.id + 1


# ---------------------------------------------------------------------------
# Generic traversal over parametric types and constraints

def iter_params(t) -> Iterator[Param]:
    """Yield parameters of t left to right (with repetitions)."""
    if isinstance(t, (TyVar, RegionVar, DirtVar)):
        yield t
    elif isinstance(t, GROUND_TYPES):
        return
    elif isinstance(t, Arrow):
        yield from iter_params(t.dom)
        yield from iter_params(t.cod)
    elif isinstance(t, EffTy):
        yield t.region
    elif isinstance(t, HandlerTy):
        yield from iter_params(t.inp)
        yield from iter_params(t.out)
    elif isinstance(t, Dirty):
        yield from iter_params(t.ty)
        yield from iter_params(t.row)
    elif isinstance(t, Row):
        for _, r in t.ops:
            yield r
        yield t.rest
    elif isinstance(t, (TyLe, DirtyLe, DirtLe, DirtRowLe, SkelEq)):
        yield from iter_params(t.lhs)
        yield from iter_params(t.rhs)
    elif isinstance(t, RegionLe):
        yield t.lhs
        yield t.covering
        yield from sorted(t.handled)
    elif isinstance(t, InstIn):
        yield t.covering
        yield from sorted(t.handled)
    elif isinstance(t, (list, tuple, set, frozenset)):
        for x in t:
            yield from iter_params(x)
    else:
        raise TypeError(f"no parameters in {t!r}")


def free_params(t) -> set[Param]:
    """All type, region and dirt parameters occurring in t."""
    return set(iter_params(t))


def free_ids(t) -> set[int]:
    return {p.id for p in iter_params(t)}


class ParamMap:
    """A parametric substitution: α ↦ type, ρ ↦ ρ, δ ↦ row."""

    def __init__(self, ty=None, reg=None, dirt=None):
        self.ty: dict[TyVar, ParamType] = dict(ty or {})
        self.reg: dict[RegionVar, RegionVar] = dict(reg or {})
        self.dirt: dict[int, Row] = dict(dirt or {})

    def __bool__(self) -> bool:
        return bool(self.ty or self.reg or self.dirt)

    def region(self, r: RegionVar) -> RegionVar:
        return self.reg.get(r, r)

    def row(self, row: Row) -> Row:
        ops = [(o, self.region(r)) for o, r in row.ops]
        rest = row.rest
        img = self.dirt.get(rest.id)
        if img is not None:
            ops.extend(img.ops)
            rest = img.rest
        return Row(tuple(ops), rest)

    def dirt_var_row(self, d: DirtVar) -> Row:
        img = self.dirt.get(d.id)
        return img if img is not None else Row((), d)

    def type(self, t):
        if isinstance(t, TyVar):
            return self.ty.get(t, t)
        if isinstance(t, GROUND_TYPES):
            return t
        if isinstance(t, Arrow):
            return Arrow(self.type(t.dom), self.dirty(t.cod))
        if isinstance(t, EffTy):
            return EffTy(t.effect, self.region(t.region))
        if isinstance(t, HandlerTy):
            return HandlerTy(self.dirty(t.inp), self.dirty(t.out))
        if isinstance(t, Dirty):
            return self.dirty(t)
        raise TypeError(f"not a parametric type: {t!r}")

    def dirty(self, d: Dirty) -> Dirty:
        return Dirty(self.type(d.ty), self.row(d.row))

    def constraint(self, k: Constraint) -> Constraint:
        o = k.origin
        if isinstance(k, TyLe):
            return TyLe(self.type(k.lhs), self.type(k.rhs), origin=o)
        if isinstance(k, SkelEq):
            return SkelEq(self.type(k.lhs), self.type(k.rhs), origin=o)
        if isinstance(k, DirtyLe):
            return DirtyLe(self.dirty(k.lhs), self.dirty(k.rhs), origin=o)
        if isinstance(k, RegionLe):
            return RegionLe(self.region(k.lhs), self.region(k.covering),
                            frozenset(self.region(r) for r in k.handled), origin=o)
        if isinstance(k, InstIn):
            return InstIn(k.ins, self.region(k.covering),
                          frozenset(self.region(r) for r in k.handled), origin=o)
        if isinstance(k, DirtLe):
            if k.lhs.id in self.dirt or k.rhs.id in self.dirt:
                lhs, rhs = self.dirt_var_row(k.lhs), self.dirt_var_row(k.rhs)
                if lhs.ops or rhs.ops:
                    return DirtRowLe(lhs, rhs, origin=o)
                return DirtLe(lhs.rest, rhs.rest, origin=o)
            return k
        if isinstance(k, DirtRowLe):
            return DirtRowLe(self.row(k.lhs), self.row(k.rhs), origin=o)
        raise TypeError(f"not a constraint: {k!r}")

    def apply(self, t):
        if isinstance(t, (TyLe, SkelEq, DirtyLe, RegionLe, InstIn, DirtLe, DirtRowLe)):
            return self.constraint(t)
        if isinstance(t, Row):
            return self.row(t)
        if isinstance(t, RegionVar):
            return self.region(t)
        return self.type(t)

    def compose_after(self, older: "ParamMap") -> "ParamMap":
        """Return self ∘ older: apply older first, then self."""
        ty = {a: self.type(t) for a, t in older.ty.items()}
        for a, t in self.ty.items():
            ty.setdefault(a, t)
        reg = {r: self.region(s) for r, s in older.reg.items()}
        for r, s in self.reg.items():
            reg.setdefault(r, s)
        dirt = {d: self.row(row) for d, row in older.dirt.items()}
        for d, row in self.dirt.items():
            dirt.setdefault(d, row)
        return ParamMap(ty, reg, dirt)


def rename_params(t, mapping: dict[Param, Param]):
    """Rename parameters one-for-one; dirt keeps its hidden annotation per new var."""
    ty = {k: v for k, v in mapping.items() if isinstance(k, TyVar)}
    reg = {k: v for k, v in mapping.items() if isinstance(k, RegionVar)}
    dirt = {k.id: Row((), v) for k, v in mapping.items() if isinstance(k, DirtVar)}
    pm = ParamMap(ty, reg, dirt)
    if isinstance(t, (list, tuple)):
        return type(t)(pm.apply(x) for x in t)
    return pm.apply(t)


def type_size(t) -> int:
    if isinstance(t, (TyVar,) + GROUND_TYPES):
        return 1
    if isinstance(t, Arrow):
        return 1 + type_size(t.dom) + type_size(t.cod.ty)
    if isinstance(t, EffTy):
        return 1
    if isinstance(t, HandlerTy):
        return 1 + type_size(t.inp.ty) + type_size(t.out.ty)
    if isinstance(t, Dirty):
        return type_size(t.ty)
    return 1
