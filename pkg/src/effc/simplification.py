"""Polarity, garbage collection of unified constraint sets, the region
tactics, the end-of-binding tactics and the witness solution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .closed_types import ClosedSubstitution
from .errors import NotUnified
from .syntax import (
    GROUND_TYPES, UNIT, Arrow, Dirty, DirtLe, DirtVar, EffTy, HandlerTy, InstIn,
    ParamType, RegionLe, RegionVar, Row, Signature, TyLe, TyVar, iter_params,
)
from .unification import ConstraintSet, is_unified


# ---------------------------------------------------------------------------
# Polarity

def _ids(t) -> set[int]:
    return {p.id for p in iter_params(t)}


def positive(t) -> set[int]:
    if isinstance(t, TyVar):
        return {t.id}
    if isinstance(t, GROUND_TYPES):
        return set()
    if isinstance(t, EffTy):
        return {t.region.id}
    if isinstance(t, Arrow):
        return negative(t.dom) | positive(t.cod)
    if isinstance(t, HandlerTy):
        return negative(t.inp) | positive(t.out)
    if isinstance(t, Dirty):
        return positive(t.ty) | _ids(t.row)
    if isinstance(t, Row):
        return _ids(t)
    raise TypeError(f"no polarity for {t!r}")


def negative(t) -> set[int]:
    if isinstance(t, (TyVar, EffTy, Row) + GROUND_TYPES):
        return set()
    if isinstance(t, Arrow):
        return positive(t.dom) | negative(t.cod)
    if isinstance(t, HandlerTy):
        return positive(t.inp) | negative(t.out)
    if isinstance(t, Dirty):
        return negative(t.ty)
    raise TypeError(f"no polarity for {t!r}")


@dataclass(frozen=True)
class PolaritySets:
    positive: frozenset[int]
    negative: frozenset[int]
    base_positive: frozenset[int]

    @property
    def P(self) -> frozenset[int]:
        return self.positive

    @property
    def N(self) -> frozenset[int]:
        return self.negative

    def without_positive(self, ids: Iterable[int]) -> "PolaritySets":
        return PolaritySets(self.positive - frozenset(ids), self.negative, self.base_positive)


def polarity(ty, gamma: Iterable | dict, cset: ConstraintSet) -> PolaritySets:
    """P and N for a type under a context; P also takes in the handled
    parameters of constraints whose endpoints run from N into the base P."""
    types = list(gamma.values()) if isinstance(gamma, dict) else list(gamma)
    p0 = set(positive(ty))
    n = set(negative(ty))
    for a in types:
        p0 |= negative(a)
        n |= positive(a)
    p = set(p0)
    for k in cset.region_constraints():
        if k.lhs.id in n and k.covering.id in p0:
            p |= {r.id for r in k.handled}
    for k in cset.inst_constraints():
        if k.covering.id in p0:
            p |= {r.id for r in k.handled}
    return PolaritySets(frozenset(p), frozenset(n), frozenset(p0))


# ---------------------------------------------------------------------------
# Garbage collection

def gc(cset: ConstraintSet, pn: PolaritySets) -> ConstraintSet:
    """Keep the constraints running from negative to positive parameters,
    instance constraints on positive regions, and skeletons within P ∪ N."""
    P, N = pn.positive, pn.negative
    out = ConstraintSet()
    keep = P | N
    # An inhabited region that is not negative cannot shrink to ∅.  Without a
    # definite instance, a positive one pins its upper bound, and one outside
    # P ∪ N still forces the upper bound to be non-empty.
    definite = {k.covering for k in cset.inst_constraints() if not k.handled}
    nonempty = definite | {k.covering for k in cset.region_constraints()
                           if not k.handled and k.lhs.inhabited and k.lhs.id in N}
    for members in cset.skel_classes():
        kept = sorted(a for a in members if a.id in keep)
        for a in kept:
            out.register(a)
        for a, b in zip(kept, kept[1:]):
            out.merge(a, b)
    for k in cset.ty_constraints():
        if k.lhs.id in N and k.rhs.id in P:
            out.insert(k)
    for k in cset.region_constraints():
        pinned = (k.lhs.inhabited and k.lhs.id not in N and k.lhs not in definite
                  and (k.lhs.id in P or k.covering not in nonempty))
        if (k.lhs.id in N or pinned) and k.covering.id in P:
            out.insert(k)
    for k in cset.inst_constraints():
        if k.covering.id in P:
            out.insert(k)
    for k in cset.dirt_constraints():
        if k.lhs.id in N and k.rhs.id in P:
            out.insert(k)
    return out


def _rebuild(cset: ConstraintSet, regions: Iterable[RegionLe], insts: Iterable[InstIn]
             ) -> ConstraintSet:
    out = ConstraintSet()
    for members in cset.skel_classes():
        chain = sorted(members)
        for a in chain:
            out.register(a)
        for a, b in zip(chain, chain[1:]):
            out.merge(a, b)
    for k in cset.ty_constraints():
        out.insert(k)
    for k in regions:
        out.insert(k)
    for k in insts:
        out.insert(k)
    for k in cset.dirt_constraints():
        out.insert(k)
    return out


def _definite(insts: Iterable[InstIn]) -> dict[RegionVar, set[str]]:
    """Instances surely in each region (instance constraints with nothing handled)."""
    out: dict[RegionVar, set[str]] = {}
    for k in insts:
        if not k.handled:
            out.setdefault(k.covering, set()).add(k.ins)
    return out


def _drop_subsumed(items: list) -> list:
    """Drop a constraint when another with the same endpoints has a smaller
    handled set; of two variants, the stronger one implies the weaker."""
    def ends(k):
        return (k.lhs, k.covering) if isinstance(k, RegionLe) else (k.ins, k.covering)

    out = []
    for k in items:
        if any(j is not k and ends(j) == ends(k) and j.handled < k.handled for j in items):
            continue
        if k not in out:
            out.append(k)
    return out


def _demoted(pn: PolaritySets, regions: list[RegionLe], insts: list[InstIn]) -> set[int]:
    in_unions = {r.id for k in regions + insts for r in k.handled}
    extra = pn.positive - pn.base_positive
    return {i for i in extra if i not in in_unions}


def _with_handled(k, handled):
    if isinstance(k, RegionLe):
        return RegionLe(k.lhs, k.covering, frozenset(handled), origin=k.origin)
    return InstIn(k.ins, k.covering, frozenset(handled), origin=k.origin)


def _region_pass(regions: list[RegionLe], insts: list[InstIn]):
    definite = _definite(insts)
    # (1) a handled region that surely holds two instances is never a singleton
    plural = {r for r, s in definite.items() if len(s) >= 2}

    def prune(k):
        h = set(k.handled) - plural
        if isinstance(k, InstIn):
            h = {r for r in h if not (definite.get(r) and k.ins not in definite[r])}
        # (2) a handled region below another handled one makes the upper redundant
        for lo in list(h):
            for e in regions:
                if (e.lhs == lo and e.covering in h and e.covering != lo
                        and not e.handled and lo.inhabited):
                    h.discard(e.covering)
        return _with_handled(k, h) if h != set(k.handled) else k

    new_regions = _drop_subsumed([prune(k) for k in regions])
    new_insts = _drop_subsumed([prune(k) for k in insts])
    new_regions = [k for k in new_regions if k.lhs != k.covering]
    return new_regions, new_insts


def simplify_regions(cset: ConstraintSet, pn: PolaritySets | None = None) -> ConstraintSet:
    """Region tactics applied to a fixpoint, followed by a final collection
    of lower bounds of handled parameters that no longer occur in any union."""
    regions = cset.region_constraints()
    insts = cset.inst_constraints()
    while True:
        nr, ni = _region_pass(regions, insts)
        if set(nr) == set(regions) and set(ni) == set(insts):
            break
        regions, insts = nr, ni
    out = _rebuild(cset, regions, insts)
    if pn is not None:
        demoted = _demoted(pn, regions, insts)
        if demoted:
            out = gc(out, pn.without_positive(demoted))
    return out


def _lower_bounds(r: RegionVar, regions: list[RegionLe], insts: list[InstIn]) -> frozenset:
    lows = {("reg", k.lhs.id) for k in regions if k.covering == r and not k.handled}
    lows |= {("ins", k.ins) for k in insts if k.covering == r and not k.handled}
    return frozenset(lows)


def _has_any_bound(r: RegionVar, regions: list[RegionLe], insts: list[InstIn]) -> bool:
    return any(k.covering == r for k in regions) or any(k.covering == r for k in insts)


def finalize_regions(cset: ConstraintSet, pn: PolaritySets | None = None,
                     single_instance: bool = False) -> ConstraintSet:
    """End-of-binding tactics; only sound once every constraint is known."""
    regions = cset.region_constraints()
    insts = cset.inst_constraints()

    # an instance constraint is discharged by a handled parameter whose only
    # lower bound is that same instance
    def discharged(k: InstIn) -> bool:
        for r in k.handled:
            if _lower_bounds(r, regions, insts) == {("ins", k.ins)} and all(
                    j.handled == frozenset() for j in insts if j.covering == r) and not any(
                    e.covering == r for e in regions):
                return True
        return False

    insts = [k for k in insts if not (k.handled and discharged(k))]

    # a handled parameter whose lower bounds contain another's is redundant
    def prune(k):
        h = set(k.handled)
        for a in sorted(k.handled):
            for b in sorted(k.handled):
                if a == b or a not in h or b not in h:
                    continue
                la, lb = _lower_bounds(a, regions, insts), _lower_bounds(b, regions, insts)
                if la <= lb and (la != lb or a.id < b.id):
                    h.discard(b)
        return _with_handled(k, h) if h != set(k.handled) else k

    regions = _drop_subsumed([prune(k) for k in regions])
    insts = _drop_subsumed([prune(k) for k in insts])
    if single_instance:
        insts = [k for k in insts if not k.handled]
    out = _rebuild(cset, regions, insts)
    if pn is not None:
        demoted = _demoted(pn, regions, insts)
        if demoted:
            out = gc(out, pn.without_positive(demoted))
    return out


# ---------------------------------------------------------------------------
# Witness solution

def _effects_of_regions(cset: ConstraintSet, ty, signature: Signature | None
                        ) -> dict[int, str]:
    """Effect name of region parameters, read off effect types and
    instance constraints and spread along region constraints."""
    known: dict[int, str] = {}
    if ty is not None:
        stack = [ty]
        while stack:
            t = stack.pop()
            if isinstance(t, EffTy):
                known[t.region.id] = t.effect
            elif isinstance(t, Arrow):
                stack += [t.dom, t.cod.ty]
            elif isinstance(t, HandlerTy):
                stack += [t.inp.ty, t.out.ty]
            elif isinstance(t, Dirty):
                stack.append(t.ty)
    if signature is not None:
        for k in cset.inst_constraints():
            eff = signature.instances.get(k.ins)
            if eff is not None:
                known.setdefault(k.covering.id, eff)
    changed = True
    while changed:
        changed = False
        for k in cset.region_constraints():
            a, b = k.lhs.id, k.covering.id
            if a in known and b not in known:
                known[b] = known[a]
                changed = True
            elif b in known and a not in known:
                known[a] = known[b]
                changed = True
    return known


def witness_solution(cset: ConstraintSet, signature: Signature | None = None, ty=None,
                     extra: Iterable = ()) -> ClosedSubstitution:
    """The least solution of a unified set: type parameters to unit, dirt to
    ∅, and each region grown from ∅ until its instance and region
    constraints hold.  Inhabited regions left empty get a default instance
    of their effect.  `extra` lists further parameters to cover."""
    if not is_unified(cset):
        raise NotUnified("witness_solution needs a unified constraint set")
    params = set(cset.params()) | set(extra)
    if ty is not None:
        params |= set(iter_params(ty))
    tys = {p.id: UNIT for p in params if isinstance(p, TyVar)}
    dirt = {p.id: frozenset() for p in params if isinstance(p, DirtVar)}
    regions = {p for p in params if isinstance(p, RegionVar)}
    regions |= {k.covering for k in cset.inst_constraints()}
    for k in cset.region_constraints():
        regions |= {k.lhs, k.covering} | set(k.handled)
    effects = _effects_of_regions(cset, ty, signature)
    region_ks = cset.region_constraints()
    inst_ks = cset.inst_constraints()
    handled = {h for k in region_ks + inst_ks for h in k.handled}

    def solve(ks_r, ks_i, fixed: dict[int, frozenset] | None) -> dict[int, set[str]]:
        """Least regions when handled parameters are read from `fixed`
        (or from the regions being solved when it is None)."""
        regs: dict[int, set[str]] = {r.id: set() for r in regions}

        def cover(k) -> set[str]:
            src = regs if fixed is None else fixed
            out = set(regs[k.covering.id])
            for h in k.handled:
                if len(src.get(h.id, ())) == 1:
                    out |= src[h.id]
            return out

        def propagate() -> None:
            changed = True
            while changed:
                changed = False
                for k in ks_i:
                    if k.ins not in cover(k):
                        regs[k.covering.id].add(k.ins)
                        changed = True
                for k in ks_r:
                    missing = regs[k.lhs.id] - cover(k)
                    if missing:
                        regs[k.covering.id] |= missing
                        changed = True

        propagate()
        for r in sorted(regions, key=lambda q: q.id):
            if r.inhabited and not regs[r.id]:
                default = _default_instance(effects.get(r.id), signature)
                if default is not None:
                    regs[r.id].add(default)
                    propagate()
        return regs

    # Handled regions get their values from handled-free constraints first;
    # then the singleton covers are fixed and everything is re-solved until
    # the handled values agree with the result.
    regs = solve([k for k in region_ks if not k.handled],
                 [k for k in inst_ks if not k.handled], {})
    for _ in range(len(regions) + 2):
        fixed = {h.id: frozenset(regs[h.id]) for h in handled}
        regs = solve(region_ks, inst_ks, fixed)
        if all(frozenset(regs[h.id]) == fixed[h.id] for h in handled):
            break
    else:
        # No agreement: grow every region with covers read live, which is
        # always a solution though not necessarily the least one.
        regs = solve(region_ks, inst_ks, None)
    return ClosedSubstitution(tys, {r: frozenset(s) for r, s in regs.items()}, dirt)


def _default_instance(effect: str | None, signature: Signature | None) -> str | None:
    if signature is None:
        return None
    if effect is not None:
        found = signature.instances_of(effect)
        if found:
            return found[0]
    names = sorted(signature.instances)
    return names[0] if names else None
