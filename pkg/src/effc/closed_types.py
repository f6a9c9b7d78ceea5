"""Closed-world semantics used as an oracle: subtyping, closed substitutions,
constraint satisfaction and a bounded declarative type checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import MissingParameter
from .syntax import (
    BOOL, EMPTY, GROUND_TYPES, NAT, UNIT, Absurd, App, Arrow, CArrow, CDirty, CEff,
    CHandler, ClosedType, Constraint, DirtLe, DirtRowLe, Dirty, DirtyLe, DirtVar,
    EffTy, FalseLit, Fun, Handler, HandlerTy, If, Inst, InstIn, IsZero, Let, LetRec,
    LetVal, OpCall, OpCase, Pred, RegionLe, RegionVar, Row, Signature, SkelEq, Succ,
    TrueLit, TyLe, TyVar, UnitVal, Val, Var, With, Zero, free_vars, fresh_name,
    substitute,
)

ClosedDirt = frozenset  # of (instance, op) pairs


# ---------------------------------------------------------------------------
# Subtyping

def subtype(a, b) -> bool:
    """Structural subtyping on closed types and closed dirty types."""
    if isinstance(a, CDirty) and isinstance(b, CDirty):
        return a.dirt <= b.dirt and subtype(a.ty, b.ty)
    if isinstance(a, GROUND_TYPES):
        return a == b
    if isinstance(a, CEff):
        return isinstance(b, CEff) and a.effect == b.effect and a.region <= b.region
    if isinstance(a, CArrow):
        return isinstance(b, CArrow) and subtype(b.dom, a.dom) and subtype(a.cod, b.cod)
    if isinstance(a, CHandler):
        return isinstance(b, CHandler) and subtype(b.inp, a.inp) and subtype(a.out, b.out)
    return False


def shape(t) -> tuple:
    """The skeleton of a closed type: its structure with regions and dirt erased."""
    if isinstance(t, GROUND_TYPES):
        return (str(t),)
    if isinstance(t, CEff):
        return ("eff", t.effect)
    if isinstance(t, CArrow):
        return ("->", shape(t.dom), shape(t.cod.ty))
    if isinstance(t, CHandler):
        return ("=>", shape(t.inp.ty), shape(t.out.ty))
    if isinstance(t, CDirty):
        return shape(t.ty)
    raise TypeError(f"not a closed type: {t!r}")


def join(a, b):
    """Least upper bound of two closed types, when the structure allows one."""
    if a is None or b is None:
        return None
    if isinstance(a, CDirty) and isinstance(b, CDirty):
        t = join(a.ty, b.ty)
        return None if t is None else CDirty(t, a.dirt | b.dirt)
    if subtype(a, b):
        return b
    if subtype(b, a):
        return a
    if isinstance(a, CEff) and isinstance(b, CEff) and a.effect == b.effect:
        return CEff(a.effect, a.region | b.region)
    if isinstance(a, CArrow) and isinstance(b, CArrow) and a.dom == b.dom:
        cod = join(a.cod, b.cod)
        return None if cod is None else CArrow(a.dom, cod)
    if isinstance(a, CHandler) and isinstance(b, CHandler) and a.inp == b.inp:
        out = join(a.out, b.out)
        return None if out is None else CHandler(a.inp, out)
    return None


def singleton_union(regions: Iterable[frozenset[str]]) -> frozenset[str]:
    """Union of only those operands that are singletons."""
    out: set[str] = set()
    for r in regions:
        if len(r) == 1:
            out |= r
    return frozenset(out)


# ---------------------------------------------------------------------------
# Closed substitutions

@dataclass(frozen=True)
class ClosedSubstitution:
    ty: dict[int, ClosedType] = field(default_factory=dict)
    reg: dict[int, frozenset[str]] = field(default_factory=dict)
    dirt: dict[int, frozenset[tuple[str, str]]] = field(default_factory=dict)

    def region(self, r: RegionVar) -> frozenset[str]:
        if r.id not in self.reg:
            raise MissingParameter(r)
        return self.reg[r.id]

    def dirt_of(self, d: DirtVar) -> frozenset[tuple[str, str]]:
        if d.id not in self.dirt:
            raise MissingParameter(d)
        return self.dirt[d.id]

    def type_of(self, a: TyVar) -> ClosedType:
        if a.id not in self.ty:
            raise MissingParameter(a)
        return self.ty[a.id]

    def is_valid(self, params: Iterable) -> bool:
        """Inhabited regions are non-empty and dirt avoids its hidden ops."""
        for p in params:
            if isinstance(p, RegionVar) and p.inhabited and p.id in self.reg and not self.reg[p.id]:
                return False
            if isinstance(p, DirtVar) and any(op in p.hidden for _, op in self.dirt.get(p.id, ())):
                return False
        return True

    def key(self):
        return (tuple(sorted(self.ty.items(), key=lambda kv: kv[0])),
                tuple(sorted(self.reg.items())), tuple(sorted(self.dirt.items(),
                                                              key=lambda kv: kv[0])))

    def __hash__(self):
        return hash((frozenset(self.ty.items()), frozenset(self.reg.items()),
                     frozenset(self.dirt.items())))

    def __eq__(self, other):
        return (isinstance(other, ClosedSubstitution) and self.ty == other.ty
                and self.reg == other.reg and self.dirt == other.dirt)


def apply_closed(sigma: ClosedSubstitution, t):
    """Closed counterpart of a parametric type, dirty type or row."""
    if isinstance(t, TyVar):
        return sigma.type_of(t)
    if isinstance(t, GROUND_TYPES):
        return t
    if isinstance(t, Arrow):
        return CArrow(apply_closed(sigma, t.dom), apply_closed(sigma, t.cod))
    if isinstance(t, EffTy):
        return CEff(t.effect, sigma.region(t.region))
    if isinstance(t, HandlerTy):
        return CHandler(apply_closed(sigma, t.inp), apply_closed(sigma, t.out))
    if isinstance(t, Dirty):
        return CDirty(apply_closed(sigma, t.ty), apply_closed(sigma, t.row))
    if isinstance(t, Row):
        out = set(sigma.dirt_of(t.rest))
        for op, r in t.ops:
            out |= {(ins, op) for ins in sigma.region(r)}
        return frozenset(out)
    if isinstance(t, RegionVar):
        return sigma.region(t)
    if isinstance(t, DirtVar):
        return sigma.dirt_of(t)
    raise TypeError(f"cannot close {t!r}")


def satisfies(sigma: ClosedSubstitution, k: Constraint) -> bool:
    """Whether σ is a solution of one constraint."""
    if isinstance(k, (TyLe, DirtyLe)):
        try:
            return subtype(apply_closed(sigma, k.lhs), apply_closed(sigma, k.rhs))
        except ValueError:
            return False
    if isinstance(k, SkelEq):
        return shape(apply_closed(sigma, k.lhs)) == shape(apply_closed(sigma, k.rhs))
    if isinstance(k, RegionLe):
        cover = sigma.region(k.covering) | singleton_union(sigma.region(r) for r in k.handled)
        return sigma.region(k.lhs) <= cover
    if isinstance(k, InstIn):
        cover = sigma.region(k.covering) | singleton_union(sigma.region(r) for r in k.handled)
        return k.ins in cover
    if isinstance(k, DirtLe):
        return sigma.dirt_of(k.lhs) <= sigma.dirt_of(k.rhs)
    if isinstance(k, DirtRowLe):
        return apply_closed(sigma, k.lhs) <= apply_closed(sigma, k.rhs)
    raise TypeError(f"not a constraint: {k!r}")


def satisfies_all(sigma: ClosedSubstitution, ks: Iterable[Constraint]) -> bool:
    return all(satisfies(sigma, k) for k in ks)


# ---------------------------------------------------------------------------
# Minimal synthesized types (guesses for the checker's cut points)

Gamma = dict  # name -> ClosedType


def synth_expr(sig: Signature, g: Gamma, e) -> ClosedType | None:
    """The least closed type of e when it is determined locally."""
    if isinstance(e, Var):
        return g.get(e.name)
    if isinstance(e, (TrueLit, FalseLit)):
        return BOOL
    if isinstance(e, Zero):
        return NAT
    if isinstance(e, Succ):
        return NAT if synth_expr(sig, g, e.arg) == NAT else None
    if isinstance(e, UnitVal):
        return UNIT
    if isinstance(e, Inst):
        eff = sig.instances.get(e.name)
        return CEff(eff, frozenset({e.name})) if eff else None
    return None


def synth_comp(sig: Signature, g: Gamma, c, depth: int = 0) -> CDirty | None:
    """Least dirty type of c for the easily determined forms."""
    if depth > 50:
        return None
    d = depth + 1
    if isinstance(c, Val):
        t = synth_expr(sig, g, c.arg)
        return None if t is None else CDirty(t)
    if isinstance(c, IsZero):
        return CDirty(BOOL)
    if isinstance(c, Pred):
        return CDirty(NAT)
    if isinstance(c, App):
        ft = synth_expr(sig, g, c.fn)
        if isinstance(ft, CArrow):
            return ft.cod
        if isinstance(c.fn, Fun):
            a = synth_expr(sig, g, c.arg)
            if a is not None:
                return synth_comp(sig, {**g, c.fn.binder: a}, c.fn.body, d)
        return None
    if isinstance(c, OpCall):
        r = synth_expr(sig, g, c.inst)
        if not isinstance(r, CEff) or sig.op_effect(c.op) is None:
            return None
        _, b_op = sig.op_types(c.op)
        rest = synth_comp(sig, {**g, c.binder: b_op}, c.body, d)
        if rest is None:
            return None
        return CDirty(rest.ty, rest.dirt | {(i, c.op) for i in r.region})
    if isinstance(c, Let):
        first = synth_comp(sig, g, c.bound, d)
        if first is None:
            return None
        rest = synth_comp(sig, {**g, c.binder: first.ty}, c.body, d)
        return None if rest is None else CDirty(rest.ty, rest.dirt | first.dirt)
    if isinstance(c, LetVal):
        return synth_comp(sig, g, substitute(c.body, {c.binder: c.value}), d)
    if isinstance(c, If):
        return join(synth_comp(sig, g, c.then, d), synth_comp(sig, g, c.else_, d))
    if isinstance(c, With):
        inner = synth_comp(sig, g, c.body, d)
        if inner is None:
            return None
        ht = synth_expr(sig, g, c.handler)
        if isinstance(ht, CHandler):
            return ht.out
        if isinstance(c.handler, Handler):
            return _synth_handled(sig, g, c.handler, inner, d)
    return None


def _synth_handled(sig: Signature, g: Gamma, h: Handler, inner: CDirty, depth: int
                   ) -> CDirty | None:
    regions = {}
    for case in h.cases:
        r = synth_expr(sig, g, case.inst)
        if not isinstance(r, CEff):
            return None
        regions.setdefault(case.op, []).append(r.region)
    left = frozenset((i, op) for i, op in inner.dirt
                     if i not in singleton_union(regions.get(op, ())))
    out = synth_comp(sig, {**g, h.value_binder: inner.ty}, h.value_body, depth)
    if out is None:
        return None
    out = CDirty(out.ty, out.dirt | left)
    for _ in range(6):
        acc = out
        for case in h.cases:
            a_op, b_op = sig.op_types(case.op)
            g2 = {**g, case.param: a_op, case.cont: CArrow(b_op, out)}
            acc = join(acc, synth_comp(sig, g2, case.body, depth))
            if acc is None:
                return None
        if acc == out:
            return out
        out = acc
    return None


# ---------------------------------------------------------------------------
# Bounded declarative checking

def expand_letvals(t):
    """Rewrite every letval into `let _ = val e in c[e/x]`; used to compute
    guided cut types for the checker, which walks the same paths."""
    def ex(t):
        if isinstance(t, LetVal):
            body = ex(substitute(t.body, {t.binder: t.value}))
            z = fresh_name("z", free_vars(body) | free_vars(t.value))
            return Let(z, Val(ex(t.value)), body, pos=t.pos)
        if isinstance(t, (Var, TrueLit, FalseLit, Zero, UnitVal, Inst)):
            return t
        if isinstance(t, (Succ, IsZero, Pred, Absurd, Val)):
            return type(t)(ex(t.arg), pos=t.pos)
        if isinstance(t, Fun):
            return Fun(t.binder, ex(t.body), pos=t.pos)
        if isinstance(t, Handler):
            cases = tuple(OpCase(ex(k.inst), k.op, k.param, k.cont, ex(k.body), pos=k.pos)
                          for k in t.cases)
            return Handler(t.value_binder, ex(t.value_body), cases, pos=t.pos)
        if isinstance(t, If):
            return If(ex(t.cond), ex(t.then), ex(t.else_), pos=t.pos)
        if isinstance(t, App):
            return App(ex(t.fn), ex(t.arg), pos=t.pos)
        if isinstance(t, OpCall):
            return OpCall(ex(t.inst), t.op, ex(t.arg), t.binder, ex(t.body), pos=t.pos)
        if isinstance(t, Let):
            return Let(t.binder, ex(t.bound), ex(t.body), pos=t.pos)
        if isinstance(t, LetRec):
            return LetRec(t.fun, t.param, ex(t.fun_body), ex(t.body), pos=t.pos)
        if isinstance(t, With):
            return With(ex(t.handler), ex(t.body), pos=t.pos)
        raise TypeError(f"not a term: {t!r}")

    return ex(t)



def _nonempty_subsets(items: list[str]) -> list[frozenset[str]]:
    out = []
    n = len(items)
    for mask in range(1, 1 << n):
        out.append(frozenset(items[i] for i in range(n) if mask >> i & 1))
    return sorted(out, key=lambda s: (len(s), sorted(s)))


class ClosedChecker:
    """Checks Γ ⊢ t : T against the declarative rules.

    The rules are not syntax-directed: application arguments, let-bound
    results, recursive function types, handled computations and instance
    regions must be guessed.  Guesses come from `hints` (closed types keyed
    by term path), from locally synthesized least types, and finally from
    the `candidates` universe.  Every guess is verified by the rules, so a
    True answer always stands for a real derivation.
    """

    def __init__(self, signature: Signature, candidates: Iterable = (),
                 hints: dict | None = None, dirts: Iterable | None = None,
                 max_steps: int = 200_000):
        self.sig = signature
        self.candidates = list(candidates)
        self.hints = hints or {}
        if dirts is None:
            pairs = [(i, op) for eff, ops in signature.effects.items()
                     for op in ops for i in signature.instances_of(eff)]
            dirts = []
            if len(pairs) <= 4:
                for mask in range(1 << len(pairs)):
                    dirts.append(frozenset(p for j, p in enumerate(pairs) if mask >> j & 1))
        self.dirts = list(dirts)
        self.max_steps = max_steps
        self.steps = 0
        self._memo: dict = {}

    # -- guessing -----------------------------------------------------------

    def _hint(self, path):
        h = self.hints.get(path)
        if h is None:
            return []
        return list(h) if isinstance(h, (list, tuple)) else [h]

    @staticmethod
    def _unique(items):
        seen = []
        for x in items:
            if x is not None and x not in seen:
                seen.append(x)
        return seen

    def _value_guesses(self, path, *extra):
        return self._unique(self._hint(path) + list(extra) + self.candidates)

    def _dirty_guesses(self, path, *extra):
        firsts = self._unique(self._hint(path) + list(extra))
        rest = (CDirty(t, d) for t in self.candidates for d in self.dirts)
        return self._unique(firsts + list(rest))

    def _region_guesses(self, g, e, effect, path):
        found = [t.region for t in self._hint(path) if isinstance(t, CEff) and t.effect == effect]
        s = synth_expr(self.sig, g, e)
        if isinstance(s, CEff) and s.effect == effect:
            found.insert(0, s.region)
        subsets = _nonempty_subsets(self.sig.instances_of(effect))
        return self._unique(found + subsets)

    # -- entry --------------------------------------------------------------

    def check(self, g: Gamma, t, ty, path: tuple = ()) -> bool:
        if isinstance(ty, CDirty):
            return self.check_comp(g, t, ty, path)
        return self.check_expr(g, t, ty, path)

    def _tick(self) -> bool:
        self.steps += 1
        return self.steps <= self.max_steps

    def _key(self, g, t, ty, path):
        return (frozenset(g.items()), t, ty, path)

    # -- expressions --------------------------------------------------------

    def check_expr(self, g: Gamma, e, ty, path: tuple = ()) -> bool:
        key = self._key(g, e, ty, path)
        if key in self._memo:
            return self._memo[key]
        if not self._tick():
            return False
        ok = self._expr(g, e, ty, path)
        self._memo[key] = ok
        return ok

    def _expr(self, g: Gamma, e, ty, path) -> bool:
        if isinstance(e, Var):
            return e.name in g and subtype(g[e.name], ty)
        if isinstance(e, (TrueLit, FalseLit)):
            return ty == BOOL
        if isinstance(e, Zero):
            return ty == NAT
        if isinstance(e, UnitVal):
            return ty == UNIT
        if isinstance(e, Succ):
            return ty == NAT and self.check_expr(g, e.arg, NAT, path + ("arg",))
        if isinstance(e, Fun):
            return isinstance(ty, CArrow) and self.check_comp(
                {**g, e.binder: ty.dom}, e.body, ty.cod, path + ("body",))
        if isinstance(e, Inst):
            eff = self.sig.instances.get(e.name)
            return (isinstance(ty, CEff) and ty.effect == eff and e.name in ty.region
                    and ty.region <= set(self.sig.instances_of(eff)))
        if isinstance(e, Handler):
            return isinstance(ty, CHandler) and self._handler(g, e, ty, path)
        return False

    def _handler(self, g: Gamma, h: Handler, ty: CHandler, path) -> bool:
        if not self.check_comp({**g, h.value_binder: ty.inp.ty}, h.value_body, ty.out,
                               path + ("vbody",)):
            return False
        per_op: dict[str, list[frozenset[str]]] = {}
        for i, case in enumerate(h.cases):
            here = path + (f"case{i}",)
            effect = self.sig.op_effect(case.op)
            if effect is None:
                return False
            region = None
            for r in self._region_guesses(g, case.inst, effect, here):
                if self.check_expr(g, case.inst, CEff(effect, r), here + ("inst",)):
                    region = r
                    break
            if region is None:
                return False
            a_op, b_op = self.sig.op_types(case.op)
            g2 = {**g, case.param: a_op, case.cont: CArrow(b_op, ty.out)}
            if not self.check_comp(g2, case.body, ty.out, here + ("body",)):
                return False
            per_op.setdefault(case.op, []).append(region)
        for ins, op in ty.inp.dirt:
            if ins in singleton_union(per_op.get(op, ())):
                continue
            if (ins, op) not in ty.out.dirt:
                return False
        return True

    # -- computations -------------------------------------------------------

    def check_comp(self, g: Gamma, c, ty: CDirty, path: tuple = ()) -> bool:
        key = self._key(g, c, ty, path)
        if key in self._memo:
            return self._memo[key]
        if not self._tick():
            return False
        ok = self._comp(g, c, ty, path)
        self._memo[key] = ok
        return ok

    def _comp(self, g: Gamma, c, ty: CDirty, path) -> bool:
        if not isinstance(ty, CDirty):
            return False
        if isinstance(c, Val):
            return self.check_expr(g, c.arg, ty.ty, path + ("arg",))
        if isinstance(c, IsZero):
            return ty.ty == BOOL and self.check_expr(g, c.arg, NAT, path + ("arg",))
        if isinstance(c, Pred):
            return ty.ty == NAT and self.check_expr(g, c.arg, NAT, path + ("arg",))
        if isinstance(c, Absurd):
            return self.check_expr(g, c.arg, EMPTY, path + ("arg",))
        if isinstance(c, If):
            return (self.check_expr(g, c.cond, BOOL, path + ("cond",))
                    and self.check_comp(g, c.then, ty, path + ("then",))
                    and self.check_comp(g, c.else_, ty, path + ("else",)))
        if isinstance(c, App):
            first = []
            ft = synth_expr(self.sig, g, c.fn)
            if isinstance(ft, CArrow):
                first.append(ft.dom)
            first.append(synth_expr(self.sig, g, c.arg))
            for a in self._value_guesses(path, *first):
                if (self.check_expr(g, c.arg, a, path + ("arg",))
                        and self.check_expr(g, c.fn, CArrow(a, ty), path + ("fn",))):
                    return True
            return False
        if isinstance(c, OpCall):
            effect = self.sig.op_effect(c.op)
            if effect is None:
                return False
            a_op, b_op = self.sig.op_types(c.op)
            if not self.check_expr(g, c.arg, a_op, path + ("arg",)):
                return False
            if not self.check_comp({**g, c.binder: b_op}, c.body, ty, path + ("body",)):
                return False
            for r in self._region_guesses(g, c.inst, effect, path):
                if all((i, c.op) in ty.dirt for i in r) and self.check_expr(
                        g, c.inst, CEff(effect, r), path + ("inst",)):
                    return True
            return False
        if isinstance(c, Let):
            s = synth_comp(self.sig, g, c.bound)
            for a in self._value_guesses(path, s.ty if s else None):
                if (self.check_comp(g, c.bound, CDirty(a, ty.dirt), path + ("bound",))
                        and self.check_comp({**g, c.binder: a}, c.body, ty, path + ("body",))):
                    return True
            return False
        if isinstance(c, LetVal):
            value_ok = False
            for a in self._value_guesses(path, synth_expr(self.sig, g, c.value)):
                if self.check_expr(g, c.value, a, path + ("bound", "arg")):
                    value_ok = True
                    break
            if not value_ok:
                return False
            body = substitute(c.body, {c.binder: c.value})
            return self.check_comp(g, body, ty, path + ("body",))
        if isinstance(c, LetRec):
            arrows = [t for t in self._value_guesses(path) if isinstance(t, CArrow)]
            for f in arrows:
                g1 = {**g, c.fun: f, c.param: f.dom}
                if (self.check_comp(g1, c.fun_body, f.cod, path + ("fun_body",))
                        and self.check_comp({**g, c.fun: f}, c.body, ty, path + ("body",))):
                    return True
            return False
        if isinstance(c, With):
            first = [synth_comp(self.sig, g, c.body)]
            ht = synth_expr(self.sig, g, c.handler)
            if isinstance(ht, CHandler):
                first.insert(0, ht.inp)
            for d in self._dirty_guesses(path, *first):
                if (self.check_comp(g, c.body, d, path + ("body",))
                        and self.check_expr(g, c.handler, CHandler(d, ty), path + ("handler",))):
                    return True
            return False
        return False


def check_closed(gamma: Gamma, t, ty, candidates: Iterable = (),
                 signature: Signature | None = None, hints: dict | None = None,
                 dirts: Iterable | None = None) -> bool:
    """Whether Γ ⊢ t : ty has a derivation whose cut types come from the
    guesses described on ClosedChecker."""
    checker = ClosedChecker(signature or Signature(), candidates, hints, dirts)
    return checker.check(dict(gamma), t, ty)
