"""Finite-universe oracles: closed-substitution enumeration, the set of
closed types a constrained type describes, and equivalence checks built on
them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from . import masks
from .closed_types import (
    ClosedSubstitution, apply_closed, expand_letvals, satisfies_all, shape, subtype,
)
from .errors import BudgetExceeded
from .inference import Inferencer
from .simplification import witness_solution
from .syntax import (
    BOOL, EMPTY, GROUND_TYPES, NAT, UNIT, Arrow, CArrow, CDirty, CEff, CHandler,
    DirtLe, DirtRowLe, Dirty, DirtyLe, DirtVar, EffTy, HandlerTy, InstIn, ParamMap,
    RegionLe, RegionVar, Row, Signature, SkelEq, TyLe, TyVar, is_expression, iter_params,
)
from .unification import ConstraintSet, unify


# ---------------------------------------------------------------------------
# Universe

@dataclass
class Universe:
    """Finite ranges for closed substitutions.

    Candidates are every closed type up to `depth` arrow/handler nesting over
    `grounds` and the signature's effect types; they are closed under
    immediate subterms.  `dirts_in_types` optionally restricts the dirt
    annotations used inside candidate arrows and handlers.
    """

    signature: Signature
    depth: int = 1
    grounds: tuple = (UNIT, BOOL, NAT, EMPTY)
    effect_types: bool = True
    arrows: bool = True
    handlers: bool = False
    dirts_in_types: tuple | None = None
    budget: int = 5_000_000
    candidates: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth bound must be non-negative")
        self.instances = sorted(self.signature.instances)
        self.pairs = sorted((ins, op) for eff, ops in self.signature.effects.items()
                            for op in ops for ins in self.signature.instances_of(eff))
        self.ops = sorted({op for _, op in self.pairs} | {
            op for ops in self.signature.effects.values() for op in ops})
        if not self.candidates:
            self.candidates = tuple(self._generate())

    @property
    def dirts(self) -> list[frozenset]:
        return [frozenset(p for j, p in enumerate(self.pairs) if mask >> j & 1)
                for mask in range(1 << len(self.pairs))]

    def regions_of(self, effect: str | None) -> list[str]:
        if effect is None:
            return list(self.instances)
        return self.signature.instances_of(effect)

    def _generate(self) -> list:
        level = list(self.grounds)
        if self.effect_types:
            for eff in sorted(self.signature.effects):
                names = self.signature.instances_of(eff)
                for mask in range(1, 1 << len(names)):
                    level.append(CEff(eff, frozenset(n for j, n in enumerate(names) if mask >> j & 1)))
        dirts = list(self.dirts_in_types) if self.dirts_in_types is not None else self.dirts
        out = list(level)
        for _ in range(self.depth):
            nxt = list(out)
            if self.arrows:
                nxt += [CArrow(a, CDirty(b, d)) for a in out for b in out for d in dirts]
            if self.handlers:
                nxt += [CHandler(CDirty(a, d1), CDirty(b, d2))
                        for a in out for d1 in dirts for b in out for d2 in dirts]
            seen, uniq = set(), []
            for t in nxt:
                if t not in seen:
                    seen.add(t)
                    uniq.append(t)
            out = uniq
        return out

    def dirty_candidates(self) -> list[CDirty]:
        return [CDirty(t, d) for t in self.candidates for d in self.dirts]


# ---------------------------------------------------------------------------
# Decomposing constraints once the type parameters are fixed

class _Fail(Exception):
    pass


class _MaskProblem:
    """Collects region and dirt bitmask constraints for the kernel."""

    def __init__(self, u: Universe):
        self.u = u
        self.inst_bit = {n: 1 << i for i, n in enumerate(u.instances)}
        self.pair_bit = {p: 1 << i for i, p in enumerate(u.pairs)}
        self.op_table = {op: k for k, op in enumerate(u.ops)}
        self.tables = [self._table(op) for op in u.ops]

    def _table(self, op):
        out = []
        for mask in range(1 << len(self.u.instances)):
            m = 0
            for i, n in enumerate(self.u.instances):
                if mask >> i & 1:
                    m |= self.pair_bit.get((n, op), 0)
            out.append(m)
        return out

    def region_mask(self, names: Iterable[str]) -> int:
        m = 0
        for n in names:
            if n not in self.inst_bit:
                raise _Fail()
            m |= self.inst_bit[n]
        return m

    def dirt_mask(self, pairs: Iterable) -> int:
        m = 0
        for p in pairs:
            if p not in self.pair_bit:
                raise _Fail()
            m |= self.pair_bit[p]
        return m

    def region_term(self, r):
        if isinstance(r, RegionVar):
            return 0, [(r, -1)]
        return self.region_mask(r), []

    def dirt_term(self, d):
        if isinstance(d, Row):
            items = [(d.rest, -1)] + [(r, self.op_table[op]) for op, r in d.ops]
            return 0, items
        if isinstance(d, DirtVar):
            return 0, [(d, -1)]
        return self.dirt_mask(d), []


def _view(t, tau):
    if isinstance(t, TyVar):
        return tau[t.id]
    return t


def _pshape(t, tau):
    t = _view(t, tau)
    if isinstance(t, GROUND_TYPES):
        return (str(t),)
    if isinstance(t, (CEff, EffTy)):
        return ("eff", t.effect)
    if isinstance(t, (CArrow, Arrow)):
        return ("->", _pshape(t.dom, tau), _pshape(t.cod.ty, tau))
    if isinstance(t, (CHandler, HandlerTy)):
        return ("=>", _pshape(t.inp.ty, tau), _pshape(t.out.ty, tau))
    if isinstance(t, (CDirty, Dirty)):
        return _pshape(t.ty, tau)
    raise TypeError(f"no shape for {t!r}")


def _sub(lhs, rhs, tau, mp: _MaskProblem, out: list) -> None:
    """Reduce lhs ≤ rhs to mask constraints, or raise _Fail."""
    lhs, rhs = _view(lhs, tau), _view(rhs, tau)
    if isinstance(lhs, GROUND_TYPES) or isinstance(rhs, GROUND_TYPES):
        if lhs != rhs:
            raise _Fail()
        return
    if isinstance(lhs, (CEff, EffTy)):
        if not isinstance(rhs, (CEff, EffTy)) or lhs.effect != rhs.effect:
            raise _Fail()
        lc, lt = mp.region_term(lhs.region)
        rc, rt = mp.region_term(rhs.region)
        out.append((lc, lt, rc, rt, ()))
        return
    if isinstance(lhs, (CArrow, Arrow)):
        if not isinstance(rhs, (CArrow, Arrow)):
            raise _Fail()
        _sub(rhs.dom, lhs.dom, tau, mp, out)
        _sub_dirty(lhs.cod, rhs.cod, tau, mp, out)
        return
    if isinstance(lhs, (CHandler, HandlerTy)):
        if not isinstance(rhs, (CHandler, HandlerTy)):
            raise _Fail()
        _sub_dirty(rhs.inp, lhs.inp, tau, mp, out)
        _sub_dirty(lhs.out, rhs.out, tau, mp, out)
        return
    raise _Fail()


def _dirt_of(d):
    return d.row if isinstance(d, Dirty) else d.dirt


def _sub_dirty(lhs, rhs, tau, mp, out) -> None:
    _sub(lhs.ty, rhs.ty, tau, mp, out)
    lc, lt = mp.dirt_term(_dirt_of(lhs))
    rc, rt = mp.dirt_term(_dirt_of(rhs))
    out.append((lc, lt, rc, rt, ()))


def _decompose(k, tau, mp: _MaskProblem) -> list:
    out: list = []
    if isinstance(k, TyLe):
        _sub(k.lhs, k.rhs, tau, mp, out)
    elif isinstance(k, DirtyLe):
        _sub_dirty(k.lhs, k.rhs, tau, mp, out)
    elif isinstance(k, SkelEq):
        if _pshape(k.lhs, tau) != _pshape(k.rhs, tau):
            raise _Fail()
    elif isinstance(k, RegionLe):
        out.append((0, [(k.lhs, -1)], 0, [(k.covering, -1)], tuple(sorted(k.handled, key=lambda r: r.id))))
    elif isinstance(k, InstIn):
        out.append((mp.region_mask([k.ins]), [], 0, [(k.covering, -1)],
                    tuple(sorted(k.handled, key=lambda r: r.id))))
    elif isinstance(k, DirtLe):
        out.append((0, [(k.lhs, -1)], 0, [(k.rhs, -1)], ()))
    elif isinstance(k, DirtRowLe):
        lc, lt = mp.dirt_term(k.lhs)
        rc, rt = mp.dirt_term(k.rhs)
        out.append((lc, lt, rc, rt, ()))
    else:
        raise TypeError(f"not a constraint: {k!r}")
    return out


def _type_vars(t) -> list[TyVar]:
    return [p for p in iter_params(t) if isinstance(p, TyVar)]


def _constraint_params(k) -> list:
    if isinstance(k, (TyLe, DirtyLe, SkelEq, DirtRowLe)):
        return list(iter_params(k.lhs)) + list(iter_params(k.rhs))
    if isinstance(k, RegionLe):
        return [k.lhs, k.covering, *k.handled]
    if isinstance(k, InstIn):
        return [k.covering, *k.handled]
    if isinstance(k, DirtLe):
        return [k.lhs, k.rhs]
    raise TypeError(f"not a constraint: {k!r}")


def _as_constraints(c) -> list:
    """Atoms of a constraint set, with its skeleton classes as SkelEq."""
    if isinstance(c, ConstraintSet):
        ks = list(c.atoms())
        for cls in c.skel_classes():
            members = sorted(cls, key=lambda a: a.id)
            ks += [SkelEq(members[0], b) for b in members[1:]]
        return ks
    return list(c)


def _region_effects(ks: list, extra: Iterable, sig: Signature) -> dict:
    """Effect of each region parameter, where the constraints tell."""
    known: dict[RegionVar, str] = {}

    def visit(t):
        if isinstance(t, EffTy):
            known.setdefault(t.region, t.effect)
        elif isinstance(t, Arrow):
            visit(t.dom)
            visit(t.cod)
        elif isinstance(t, HandlerTy):
            visit(t.inp)
            visit(t.out)
        elif isinstance(t, Dirty):
            visit(t.ty)
            visit(t.row)
        elif isinstance(t, Row):
            for op, r in t.ops:
                eff = sig.op_effect(op)
                if eff is not None:
                    known.setdefault(r, eff)

    for k in ks:
        if isinstance(k, (TyLe, DirtyLe, SkelEq, DirtRowLe)):
            visit(k.lhs)
            visit(k.rhs)
        elif isinstance(k, InstIn) and k.ins in sig.instances:
            known.setdefault(k.covering, sig.instances[k.ins])
    for t in extra:
        visit(t)
    changed = True
    while changed:
        changed = False
        for k in ks:
            if isinstance(k, RegionLe):
                a, b = k.lhs, k.covering
                if a in known and b not in known:
                    known[b] = known[a]
                    changed = True
                elif b in known and a not in known:
                    known[a] = known[b]
                    changed = True
    return known


# ---------------------------------------------------------------------------
# Enumeration

def iter_solutions(c, params: Iterable, u: Universe, limit: int | None = None,
                   mentions: Iterable = ()) -> Iterator[ClosedSubstitution]:
    """Every σ over U on params ∪ params(c) with σ ⊨ c, respecting skeletons
    and inhabited regions.  `mentions` are extra types whose effect types
    help pick region ranges."""
    ks = _as_constraints(c)
    mentions = list(mentions)
    all_params = set(params)
    for k in ks:
        all_params |= set(_constraint_params(k))
    tvars = sorted((p for p in all_params if isinstance(p, TyVar)), key=lambda p: p.id)
    rvars = sorted((p for p in all_params if isinstance(p, RegionVar)), key=lambda p: p.id)
    dvars = sorted((p for p in all_params if isinstance(p, DirtVar)), key=lambda p: p.id)

    mp = _MaskProblem(u)
    effects = _region_effects(ks, mentions, u.signature)
    var_index: dict = {}
    domains: list[list[int]] = []
    for r in rvars:
        var_index[r] = len(domains)
        allowed = mp.region_mask(u.regions_of(effects.get(r)))
        domains.append([m for m in range(1 << len(u.instances))
                        if not m & ~allowed and (m or not r.inhabited)])
    for d in dvars:
        var_index[d] = len(domains)
        allowed = mp.dirt_mask(p for p in u.pairs if p[1] not in d.hidden)
        domains.append([m for m in range(1 << len(u.pairs)) if not m & ~allowed])

    space = len(u.candidates) ** len(tvars)
    for dom in domains:
        space *= max(1, len(dom))
    if space > u.budget:
        raise BudgetExceeded(f"search space {space} exceeds budget {u.budget}")

    # Skeleton classes: type variables tied by SkelEq share one shape.
    parent = {a: a for a in tvars}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k in ks:
        if isinstance(k, SkelEq) and isinstance(k.lhs, TyVar) and isinstance(k.rhs, TyVar):
            ra, rb = find(k.lhs), find(k.rhs)
            if ra != rb:
                parent[rb] = ra
    by_shape: dict = {}
    for t in u.candidates:
        by_shape.setdefault(shape(t), []).append(t)
    order = sorted(tvars, key=lambda a: (min(b.id for b in tvars if find(b) == find(a)), a.id))
    pos = {a: i for i, a in enumerate(order)}
    ready: list[list] = [[] for _ in order]
    static: list = []
    for k in ks:
        tv = [p for p in _constraint_params(k) if isinstance(p, TyVar)]
        if tv:
            ready[max(pos[a] for a in tv)].append(k)
        else:
            static.append(k)

    def to_kernel(items):
        out = []
        for lc, lt, rc, rt, hs in items:
            out.append((lc, [(var_index[v], t) for v, t in lt], rc,
                        [(var_index[v], t) for v, t in rt], tuple(var_index[h] for h in hs)))
        return out

    try:
        base = [m for k in static for m in _decompose(k, {}, mp)]
    except _Fail:
        return
    remaining = [limit if limit is not None else u.budget]

    def with_masks(tau, mask_ks) -> Iterator[ClosedSubstitution]:
        sols, overflow = masks.solve(domains, to_kernel(mask_ks), mp.tables, remaining[0])
        if overflow:
            raise BudgetExceeded(f"more than {remaining[0]} solutions")
        remaining[0] -= len(sols)
        for sol in sols:
            reg = {r.id: frozenset(n for n in u.instances if sol[var_index[r]] & mp.inst_bit[n])
                   for r in rvars}
            dirt = {d.id: frozenset(p for p in u.pairs if sol[var_index[d]] & mp.pair_bit[p])
                    for d in dvars}
            yield ClosedSubstitution(dict(tau), reg, dirt)

    root_shape: dict = {}

    def assign(i, tau, mask_ks) -> Iterator[ClosedSubstitution]:
        if i == len(order):
            yield from with_masks(tau, mask_ks)
            return
        a = order[i]
        root = find(a)
        if root in root_shape:
            choices = by_shape.get(root_shape[root], [])
            fixed = True
        else:
            choices = u.candidates
            fixed = False
        for t in choices:
            if not fixed:
                root_shape[root] = shape(t)
            tau[a.id] = t
            try:
                extra = [m for k in ready[i] for m in _decompose(k, tau, mp)]
            except _Fail:
                continue
            if any(not lt and not rt and not hs and lc & ~rc for lc, lt, rc, rt, hs in extra):
                continue
            yield from assign(i + 1, tau, mask_ks + extra)
        tau.pop(a.id, None)
        if not fixed:
            root_shape.pop(root, None)

    yield from assign(0, {}, base)


def enumerate_solutions(c, params: Iterable, u: Universe) -> set[ClosedSubstitution]:
    """All closed substitutions over U on the given parameters (and those of
    c) that satisfy c."""
    return set(iter_solutions(c, params, u))


def _upward(images: Iterable, cands: Iterable) -> frozenset:
    images = list(set(images))
    return frozenset(t for t in cands if any(subtype(s, t) for s in images))


def types_set(ty, c, u: Universe) -> frozenset:
    """Candidates that some σ ⊨ c makes a supertype of σ(ty)."""
    images = set()
    for sigma in iter_solutions(c, iter_params(ty), u, mentions=[ty]):
        images.add(apply_closed(sigma, ty))
    cands = u.dirty_candidates() if isinstance(ty, Dirty) else u.candidates
    return _upward(images, cands)


def constraint_equiv(c1, c2, ty, u: Universe, ty2=None) -> bool:
    """Whether c1 and c2 describe the same closed types for ty (or for ty2
    under c2, e.g. a substituted type)."""
    return types_set(ty, c1, u) == types_set(ty if ty2 is None else ty2, c2, u)


# ---------------------------------------------------------------------------
# Unification preservation

def _match(pt, ct, out: dict) -> bool:
    """Bind parameters of pt so that it closes to ct."""
    if isinstance(pt, TyVar):
        key = ("t", pt.id)
        if key in out:
            return out[key] == ct
        out[key] = ct
        return True
    if isinstance(pt, GROUND_TYPES):
        return pt == ct
    if isinstance(pt, EffTy):
        if not isinstance(ct, CEff) or ct.effect != pt.effect:
            return False
        key = ("r", pt.region.id)
        if key in out:
            return out[key] == ct.region
        out[key] = ct.region
        return True
    if isinstance(pt, Arrow):
        return isinstance(ct, CArrow) and _match(pt.dom, ct.dom, out) and _match_dirty(pt.cod, ct.cod, out)
    if isinstance(pt, HandlerTy):
        return (isinstance(ct, CHandler) and _match_dirty(pt.inp, ct.inp, out)
                and _match_dirty(pt.out, ct.out, out))
    return False


def _match_dirty(pd: Dirty, cd: CDirty, out: dict) -> bool:
    if not _match(pd.ty, cd.ty, out):
        return False
    row = pd.row
    rest = set(cd.dirt)
    for op, r in row.ops:
        names = frozenset(i for i, o in cd.dirt if o == op)
        key = ("r", r.id)
        if key in out and out[key] != names:
            return False
        out[key] = names
        rest -= {(i, op) for i in names}
    key = ("d", row.rest.id)
    rest = frozenset(rest)
    if key in out:
        return out[key] == rest
    out[key] = rest
    return True


def _close_param(sigma: ClosedSubstitution, p):
    if isinstance(p, TyVar):
        return sigma.type_of(p)
    if isinstance(p, RegionVar):
        return sigma.region(p)
    return sigma.dirt_of(p)


def _match_param(image, value, out: dict) -> bool:
    if isinstance(image, RegionVar):
        key = ("r", image.id)
    elif isinstance(image, DirtVar):
        key = ("d", image.id)
    elif isinstance(image, Row):
        return _match_row(image, value, out)
    else:
        return _match(image, value, out)
    if key in out:
        return out[key] == value
    out[key] = value
    return True


def _match_row(row: Row, dirt, out: dict) -> bool:
    return _match_dirty(Dirty(UNIT, row), CDirty(UNIT, dirt), out)


def _key_of(sigma: ClosedSubstitution, keys) -> tuple:
    vals = []
    for kind, i in keys:
        table = sigma.ty if kind == "t" else sigma.reg if kind == "r" else sigma.dirt
        vals.append(table.get(i))
    return tuple(vals)


def unify_preserves(c_in, sigma_map: ParamMap, c_out, u: Universe) -> bool:
    """Solutions of c_in are exactly the σ″∘σ′ with σ″ ⊨ c_out: every
    solution of c_in over U factors through σ′ into a solution of c_out, and
    every σ″∘σ′ with σ″ ⊨ c_out over U solves c_in."""
    ks_in = _as_constraints(c_in)
    params_in = set()
    for k in ks_in:
        params_in |= set(_constraint_params(k))
    images = {p: sigma_map.dirt_var_row(p) if isinstance(p, DirtVar) else sigma_map.apply(p)
              for p in params_in}
    image_params = set()
    for img in images.values():
        image_params |= set(iter_params(img))
    outs = list(iter_solutions(c_out, image_params, u, mentions=list(images.values())))
    for s2 in outs:
        tys, regs, dirts = {}, {}, {}
        for p, img in images.items():
            v = apply_closed(s2, img)
            if isinstance(p, TyVar):
                tys[p.id] = v
            elif isinstance(p, RegionVar):
                regs[p.id] = v
            else:
                dirts[p.id] = v
        composite = ClosedSubstitution(tys, regs, dirts)
        if not composite.is_valid(params_in) or not satisfies_all(composite, ks_in):
            return False
    keys = sorted({("t" if isinstance(q, TyVar) else "r" if isinstance(q, RegionVar) else "d", q.id)
                   for q in image_params})
    index = {_key_of(s2, keys) for s2 in outs}
    for s1 in iter_solutions(ks_in, params_in, u):
        bound: dict = {}
        for p, img in images.items():
            if not _match_param(img, _close_param(s1, p), bound):
                return False
        if tuple(bound.get(k) for k in keys) not in index:
            return False
    return True


def unify_check(constraints, u: Universe, fresh=None) -> bool:
    """Unify and check preservation; on failure, check there is no solution."""
    from .errors import UnificationError
    ks = list(constraints)
    try:
        sigma_map, c_out = unify(ks, fresh)
    except UnificationError:
        return next(iter_solutions(ks, (), u), None) is None
    return unify_preserves(ks, sigma_map, c_out, u)


# ---------------------------------------------------------------------------
# Guided hints for the bounded checker

def guided_hints(term, signature: Signature):
    """Closed cut types for `check_closed`, read off the least solution of
    the term's own inferred constraints.  Returns (hints, least type)."""
    inf = Inferencer(signature, record=True)
    expanded = expand_letvals(term)
    if is_expression(expanded):
        res = inf.infer_expr({}, {}, expanded)
    else:
        res = inf.infer_comp({}, {}, expanded)
    sigma_map, cset = unify(res.constraints, inf.fresh)
    ty = sigma_map.apply(res.ty)
    notes = {path: sigma_map.apply(t) for path, t in inf.notes.items()}
    extra = set()
    for t in notes.values():
        extra |= set(iter_params(t))
    w = witness_solution(cset, signature, ty, extra=extra)
    hints = {path: apply_closed(w, t) for path, t in notes.items()}
    return hints, apply_closed(w, ty)


__all__ = [
    "BudgetExceeded", "Universe", "constraint_equiv", "enumerate_solutions",
    "guided_hints", "iter_solutions", "types_set", "unify_check", "unify_preserves",
]
