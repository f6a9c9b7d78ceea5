"""Constraint generation: one rule per construct, producing the fresh
parameter set, a parametric type and a raw constraint list.

The pipeline helpers at the bottom (toplevel values and run directives)
chain generation with unification, garbage collection and the region
tactics, and keep every intermediate stage for dumps and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import UnboundVariable, UnknownOperation
from .simplification import (
    PolaritySets, finalize_regions, gc, polarity, simplify_regions,
)
from .syntax import (
    BOOL, EMPTY, NAT, UNIT, Absurd, App, Arrow, Computation, Constraint, DirtLe,
    DirtRowLe, Dirty, DirtyLe, DirtVar, EffTy, Expression, FalseLit, Fresh, Fun,
    Handler, HandlerTy, If, Inst, InstIn, IsZero, Let, LetRec, LetVal, OpCall,
    Param, ParamMap, ParamType, Pred, RegionLe, RegionVar, Row, Signature, SkelEq,
    Succ, TrueLit, TyLe, TyVar, UnitVal, Val, Var, With, Zero, free_params,
    free_vars, iter_params, rename_params,
)
from .unification import ConstraintSet, unify

Context = dict  # name -> ParamType
PolyContext = dict  # name -> Scheme, in binding order


@dataclass(frozen=True)
class Scheme:
    """∀bound. ty | constraints"""

    bound: frozenset[int]
    ty: ParamType
    constraints: tuple[Constraint, ...] = ()

    @classmethod
    def from_unified(cls, ty: ParamType, cset: ConstraintSet) -> "Scheme":
        """Close over every parameter of a unified set; skeleton classes
        survive as chains of SkelEq so instantiation can rebuild them."""
        ks: list[Constraint] = list(cset.atoms())
        for members in cset.skel_classes():
            chain = sorted(members)
            ks.extend(SkelEq(a, b) for a, b in zip(chain, chain[1:]))
        bound = frozenset(p.id for p in iter_params([ty] + ks))
        return cls(bound, ty, tuple(ks))

    def params_in_order(self) -> list[Param]:
        seen: dict[int, Param] = {}
        for p in iter_params([self.ty, *self.constraints]):
            if p.id in self.bound and p.id not in seen:
                seen[p.id] = p
        return list(seen.values())

    def instantiate(self, fresh: Fresh) -> tuple[ParamType, list[Constraint], set[int]]:
        mapping: dict[Param, Param] = {}
        for p in self.params_in_order():
            if isinstance(p, TyVar):
                mapping[p] = fresh.ty()
            elif isinstance(p, RegionVar):
                mapping[p] = fresh.region(p.inhabited)
            else:
                mapping[p] = fresh.dirt(p.hidden)
        ty = rename_params(self.ty, mapping)
        ks = [rename_params(k, mapping) for k in self.constraints]
        return ty, ks, {q.id for q in mapping.values()}

    def __str__(self) -> str:
        body = str(self.ty)
        if self.constraints:
            body += " | " + ", ".join(str(k) for k in self.constraints)
        return body


@dataclass
class InferenceResult:
    fresh: frozenset[int]
    ty: Union[ParamType, Dirty]
    constraints: list[Constraint]


def _bare(d: DirtVar) -> Row:
    return Row((), d)


def _row_le(lhs: Row, rhs: Row, origin) -> Constraint:
    if not lhs.ops and not rhs.ops:
        return DirtLe(lhs.rest, rhs.rest, origin=origin)
    return DirtRowLe(lhs, rhs, origin=origin)


def _without(d: dict, name: str) -> dict:
    if name not in d:
        return d
    return {k: v for k, v in d.items() if k != name}


class Inferencer:
    """Constraint generation over one shared fresh-id counter.

    With `record=True`, the types of cut points (application arguments,
    let-bound results, recursive functions, handled computations and
    instance expressions) are kept in `notes`, keyed by term path.
    """

    def __init__(self, signature: Signature, fresh: Fresh | None = None,
                 generalize_gc: bool = True, generalize_regions: bool = True,
                 record: bool = False):
        self.sig = signature
        self.fresh = fresh or Fresh()
        self.generalize_gc = generalize_gc
        self.generalize_regions = generalize_regions
        self.notes: dict[tuple, object] | None = {} if record else None
        self._out: list[Constraint] = []

    # -- public entry points ------------------------------------------------

    def infer_expr(self, gamma: Context, xi: PolyContext, e: Expression) -> InferenceResult:
        return self._run(lambda: self._expr(gamma, xi, e, ()))

    def infer_comp(self, gamma: Context, xi: PolyContext, c: Computation) -> InferenceResult:
        return self._run(lambda: self._comp(gamma, xi, c, ()))

    def _run(self, go) -> InferenceResult:
        start = self.fresh.next_id
        saved, self._out = self._out, []
        try:
            ty = go()
            ks = self._out
        finally:
            self._out = saved
        return InferenceResult(frozenset(range(start, self.fresh.next_id)), ty, ks)

    # -- helpers ------------------------------------------------------------

    def _emit(self, k: Constraint) -> None:
        self._out.append(k)

    def _note(self, path: tuple, ty) -> None:
        if self.notes is not None:
            self.notes[path] = ty

    def _dirty_le(self, lhs: Dirty, rhs: Dirty, origin) -> None:
        self._emit(DirtyLe(lhs, rhs, origin=origin))

    # -- expressions --------------------------------------------------------

    def _expr(self, g: Context, xi: PolyContext, e: Expression, path: tuple) -> ParamType:
        pos = e.pos
        if isinstance(e, Var):
            if e.name in g:
                return g[e.name]
            if e.name in xi:
                ty, ks, _ = xi[e.name].instantiate(self.fresh)
                self._out.extend(ks)
                return ty
            raise UnboundVariable(e.name, pos)
        if isinstance(e, (TrueLit, FalseLit)):
            return BOOL
        if isinstance(e, Zero):
            return NAT
        if isinstance(e, UnitVal):
            return UNIT
        if isinstance(e, Succ):
            a = self._expr(g, xi, e.arg, path + ("arg",))
            self._emit(TyLe(a, NAT, origin=pos))
            return NAT
        if isinstance(e, Fun):
            a = self.fresh.ty()
            c = self._comp({**g, e.binder: a}, _without(xi, e.binder), e.body, path + ("body",))
            return Arrow(a, c)
        if isinstance(e, Inst):
            effect = self.sig.instances.get(e.name)
            if effect is None:
                raise UnboundVariable(e.name, pos)
            r = self.fresh.region(True)
            self._emit(InstIn(e.name, r, origin=pos))
            return EffTy(effect, r)
        if isinstance(e, Handler):
            return self._handler(g, xi, e, path)
        raise TypeError(f"not an expression: {e!r}")

    def _handler(self, g: Context, xi: PolyContext, h: Handler, path: tuple) -> HandlerTy:
        pos = h.pos
        ops = sorted({case.op for case in h.cases})
        for case in h.cases:
            if self.sig.op_effect(case.op) is None:
                raise UnknownOperation(case.op, case.pos)
        a_in, a_out = self.fresh.ty(), self.fresh.ty()
        regions = {op: (self.fresh.region(), self.fresh.region()) for op in ops}
        d_in = self.fresh.dirt(ops)
        d_out = self.fresh.dirt(ops)
        inp = Dirty(a_in, Row(tuple((op, regions[op][0]) for op in ops), d_in))
        out = Dirty(a_out, Row(tuple((op, regions[op][1]) for op in ops), d_out))

        cv = self._comp({**g, h.value_binder: a_in}, _without(xi, h.value_binder),
                        h.value_body, path + ("vbody",))
        handled: dict[str, list[RegionVar]] = {op: [] for op in ops}
        later: list[Constraint] = []
        for i, case in enumerate(h.cases):
            here = path + (f"case{i}",)
            ai = self._expr(g, xi, case.inst, here + ("inst",))
            self._note(here, ai)
            a_op, b_op = self.sig.op_types(case.op)
            g2 = {**g, case.param: a_op, case.cont: Arrow(b_op, out)}
            xi2 = _without(_without(xi, case.param), case.cont)
            ci = self._comp(g2, xi2, case.body, here + ("body",))
            r = self.fresh.region(True)
            handled[case.op].append(r)
            effect = self.sig.op_effect(case.op)
            later.append(DirtyLe(ci, out, origin=case.pos))
            later.append(TyLe(ai, EffTy(effect, r), origin=case.pos))
        self._dirty_le(cv, out, pos)
        dirty_les = [k for k in later if isinstance(k, DirtyLe)]
        inst_les = [k for k in later if isinstance(k, TyLe)]
        self._out.extend(dirty_les)
        self._out.extend(inst_les)
        for op in ops:
            r_in, r_out = regions[op]
            self._emit(RegionLe(r_in, r_out, frozenset(handled[op]), origin=pos))
        self._emit(DirtLe(d_in, d_out, origin=pos))
        return HandlerTy(inp, out)

    # -- computations -------------------------------------------------------

    def _comp(self, g: Context, xi: PolyContext, c: Computation, path: tuple) -> Dirty:
        pos = c.pos
        if isinstance(c, Val):
            a = self._expr(g, xi, c.arg, path + ("arg",))
            return Dirty(a, _bare(self.fresh.dirt()))
        if isinstance(c, (IsZero, Pred)):
            a = self._expr(g, xi, c.arg, path + ("arg",))
            self._emit(TyLe(a, NAT, origin=pos))
            res = BOOL if isinstance(c, IsZero) else NAT
            return Dirty(res, _bare(self.fresh.dirt()))
        if isinstance(c, Absurd):
            a = self._expr(g, xi, c.arg, path + ("arg",))
            res = self.fresh.ty()
            d = self.fresh.dirt()
            self._emit(TyLe(a, EMPTY, origin=pos))
            return Dirty(res, _bare(d))
        if isinstance(c, If):
            a = self._expr(g, xi, c.cond, path + ("cond",))
            c1 = self._comp(g, xi, c.then, path + ("then",))
            c2 = self._comp(g, xi, c.else_, path + ("else",))
            res = Dirty(self.fresh.ty(), _bare(self.fresh.dirt()))
            self._emit(TyLe(a, BOOL, origin=pos))
            self._dirty_le(c1, res, pos)
            self._dirty_le(c2, res, pos)
            return res
        if isinstance(c, App):
            a1 = self._expr(g, xi, c.fn, path + ("fn",))
            a2 = self._expr(g, xi, c.arg, path + ("arg",))
            self._note(path, a2)
            res = Dirty(self.fresh.ty(), _bare(self.fresh.dirt()))
            self._emit(TyLe(a1, Arrow(a2, res), origin=pos))
            return res
        if isinstance(c, OpCall):
            return self._op(g, xi, c, path)
        if isinstance(c, Let):
            c1 = self._comp(g, xi, c.bound, path + ("bound",))
            a = self.fresh.ty()
            self._note(path, a)
            c2 = self._comp({**g, c.binder: a}, _without(xi, c.binder), c.body, path + ("body",))
            d = self.fresh.dirt()
            self._emit(TyLe(c1.ty, a, origin=pos))
            self._emit(_row_le(c1.row, _bare(d), pos))
            self._emit(_row_le(c2.row, _bare(d), pos))
            return Dirty(c2.ty, _bare(d))
        if isinstance(c, LetVal):
            return self._letval(g, xi, c, path)
        if isinstance(c, LetRec):
            a1, a2, d = self.fresh.ty(), self.fresh.ty(), self.fresh.dirt()
            res = Dirty(a2, _bare(d))
            fty = Arrow(a1, res)
            self._note(path, fty)
            g1 = {**g, c.fun: fty, c.param: a1}
            xi1 = _without(_without(xi, c.fun), c.param)
            body = self._comp(g1, xi1, c.fun_body, path + ("fun_body",))
            g2 = {**g, c.fun: fty}
            rest = self._comp(g2, _without(xi, c.fun), c.body, path + ("body",))
            self._dirty_le(body, res, pos)
            return rest
        if isinstance(c, With):
            a = self._expr(g, xi, c.handler, path + ("handler",))
            cc = self._comp(g, xi, c.body, path + ("body",))
            self._note(path, cc)
            res = Dirty(self.fresh.ty(), _bare(self.fresh.dirt()))
            self._emit(TyLe(a, HandlerTy(cc, res), origin=pos))
            return res
        raise TypeError(f"not a computation: {c!r}")

    def _op(self, g: Context, xi: PolyContext, c: OpCall, path: tuple) -> Dirty:
        pos = c.pos
        effect = self.sig.op_effect(c.op)
        if effect is None:
            raise UnknownOperation(c.op, pos)
        a_op, b_op = self.sig.op_types(c.op)
        a1 = self._expr(g, xi, c.inst, path + ("inst",))
        self._note(path, a1)
        a2 = self._expr(g, xi, c.arg, path + ("arg",))
        body = self._comp({**g, c.binder: b_op}, _without(xi, c.binder), c.body, path + ("body",))
        r = self.fresh.region()
        rs = self.fresh.region(True)
        d = self.fresh.dirt([c.op])
        row = Row(((c.op, r),), d)
        self._emit(TyLe(a1, EffTy(effect, rs), origin=pos))
        self._emit(TyLe(a2, a_op, origin=pos))
        self._emit(RegionLe(rs, r, origin=pos))
        self._emit(DirtRowLe(body.row, row, origin=pos))
        return Dirty(body.ty, row)

    def _letval(self, g: Context, xi: PolyContext, c: LetVal, path: tuple) -> Dirty:
        start = self.fresh.next_id
        saved, self._out = self._out, []
        try:
            a = self._expr(g, xi, c.value, path + ("value",))
            raw = self._out
        finally:
            self._out = saved
        local = set(range(start, self.fresh.next_id))
        outer = {p for p in free_params([a] + raw) if p.id not in local}
        if outer:
            # mentions monomorphic parameters of the context: keep as is
            scheme = Scheme(frozenset(local), a, tuple(raw))
        else:
            sigma, cset = unify(raw, self.fresh)
            ty = sigma.type(a)
            pn = polarity(ty, list(g.values()), cset)
            if self.generalize_gc:
                cset = gc(cset, pn)
            if self.generalize_regions:
                cset = simplify_regions(cset, pn)
            scheme = Scheme.from_unified(ty, cset)
        self._out.extend(scheme.constraints)
        g2 = _without(g, c.binder)
        return self._comp(g2, {**xi, c.binder: scheme}, c.body, path + ("body",))


def infer_expr(gamma: Context, xi: PolyContext, e: Expression, signature: Signature,
               fresh: Fresh | None = None) -> InferenceResult:
    return Inferencer(signature, fresh).infer_expr(gamma, xi, e)


def infer_comp(gamma: Context, xi: PolyContext, c: Computation, signature: Signature,
               fresh: Fresh | None = None) -> InferenceResult:
    return Inferencer(signature, fresh).infer_comp(gamma, xi, c)


# ---------------------------------------------------------------------------
# Toplevel pipeline


@dataclass
class PipelineOptions:
    gc: bool = True
    region_simplify: bool = True
    single_instance: bool = False


@dataclass
class Typing:
    """Every stage of typing one toplevel binding or run directive."""

    raw_ty: Union[ParamType, Dirty]
    raw: list[Constraint]
    sigma: ParamMap
    ty: Union[ParamType, Dirty]
    unified: ConstraintSet
    polarity: PolaritySets
    collected: ConstraintSet
    simplified: ConstraintSet
    final: ConstraintSet
    scheme: Scheme | None = None
    unify_trace: list = field(default_factory=list)


def type_toplevel(term, signature: Signature, xi: PolyContext, fresh: Fresh,
                  options: PipelineOptions | None = None, tracer=None) -> Typing:
    """Infer, unify, collect and simplify an expression (a letval) or a
    computation (a run directive) under the accumulated Ξ."""
    options = options or PipelineOptions()
    inf = Inferencer(signature, fresh)
    is_value = not isinstance(term, (If, IsZero, Pred, Absurd, App, Val, OpCall,
                                     Let, LetVal, LetRec, With))
    res = inf.infer_expr({}, xi, term) if is_value else inf.infer_comp({}, xi, term)
    sigma, unified = unify(res.constraints, fresh, tracer=tracer)
    ty = sigma.apply(res.ty)
    pn = polarity(ty, [], unified)
    collected = gc(unified, pn) if options.gc else unified.copy()
    simplified = simplify_regions(collected, pn) if options.region_simplify else collected.copy()
    final = finalize_regions(simplified, single_instance=options.single_instance)
    scheme = Scheme.from_unified(ty, simplified) if is_value else None
    return Typing(res.ty, res.constraints, sigma, ty, unified, pn, collected,
                  simplified, final, scheme)


def wrap_letvals(program_values: Iterable[tuple[str, Expression]], c: Computation
                 ) -> Computation:
    """Close a run directive over the toplevel values it depends on."""
    defs = list(program_values)
    needed = set(free_vars(c))
    chosen = []
    for name, value in reversed(defs):
        if name in needed:
            chosen.append((name, value))
            needed.discard(name)
            needed |= free_vars(value)
    for name, value in chosen:
        c = LetVal(name, value, c)
    return c
