"""Constraint unification: the closure operator, skeletons, occur check,
refresh and the queue-driven unify loop."""

from __future__ import annotations

from typing import Callable, Iterable

from .errors import OccursCycle, TypeMismatch
from .syntax import (
    GROUND_TYPES, Arrow, Constraint, DirtLe, DirtRowLe, Dirty, DirtyLe, DirtVar,
    EffTy, Fresh, HandlerTy, InstIn, ParamMap, ParamType, RegionLe, RegionVar,
    Row, SkelEq, TyLe, TyVar, iter_params,
)

Tracer = Callable[[ParamMap, "ConstraintSet", list], None]


def _handled_key(h: frozenset[RegionVar]) -> tuple[int, ...]:
    return tuple(sorted(r.id for r in h))


def atom_key(k: Constraint):
    """Deterministic sort key for atomic constraints."""
    if isinstance(k, TyLe):
        return (0, k.lhs.id, k.rhs.id)
    if isinstance(k, RegionLe):
        return (1, k.lhs.id, k.covering.id, _handled_key(k.handled))
    if isinstance(k, InstIn):
        return (2, k.ins, k.covering.id, _handled_key(k.handled))
    if isinstance(k, DirtLe):
        return (3, k.lhs.id, k.rhs.id)
    return (4, str(k))


class ConstraintSet:
    """A unified constraint set: atomic constraints kept closed under the
    implication rules, plus the skeleton equivalence over type parameters."""

    def __init__(self) -> None:
        self.ty_up: dict[TyVar, dict[TyVar, TyLe]] = {}
        self.ty_down: dict[TyVar, set[TyVar]] = {}
        self.reg_up: dict[RegionVar, set[RegionLe]] = {}
        self.reg_down: dict[RegionVar, set[RegionLe]] = {}
        self.inst_at: dict[RegionVar, set[InstIn]] = {}
        self.dirt_up: dict[DirtVar, dict[DirtVar, DirtLe]] = {}
        self.dirt_down: dict[DirtVar, set[DirtVar]] = {}
        self._parent: dict[TyVar, TyVar] = {}
        self._members: dict[TyVar, set[TyVar]] = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def from_constraints(cls, atoms: Iterable[Constraint]) -> "ConstraintSet":
        """Close a collection of atomic constraints (SkelEq between type
        parameters is accepted as an explicit skeleton merge)."""
        c = cls()
        for k in atoms:
            if isinstance(k, SkelEq):
                if not (isinstance(k.lhs, TyVar) and isinstance(k.rhs, TyVar)):
                    raise ValueError(f"non-atomic skeleton constraint {k}")
                c.merge(k.lhs, k.rhs)
            else:
                c.add(k)
        return c

    def copy(self) -> "ConstraintSet":
        c = ConstraintSet()
        c.ty_up = {a: dict(m) for a, m in self.ty_up.items()}
        c.ty_down = {a: set(s) for a, s in self.ty_down.items()}
        c.reg_up = {r: set(s) for r, s in self.reg_up.items()}
        c.reg_down = {r: set(s) for r, s in self.reg_down.items()}
        c.inst_at = {r: set(s) for r, s in self.inst_at.items()}
        c.dirt_up = {d: dict(m) for d, m in self.dirt_up.items()}
        c.dirt_down = {d: set(s) for d, s in self.dirt_down.items()}
        c._parent = dict(self._parent)
        c._members = {r: set(s) for r, s in self._members.items()}
        return c

    # -- skeletons ----------------------------------------------------------

    def register(self, a: TyVar) -> None:
        if a not in self._parent:
            self._parent[a] = a
            self._members[a] = {a}

    def _find(self, a: TyVar) -> TyVar:
        self.register(a)
        root = a
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[a] != root:
            self._parent[a], a = root, self._parent[a]
        return root

    def merge(self, a: TyVar, b: TyVar) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        if len(self._members[ra]) < len(self._members[rb]):
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._members[ra] |= self._members.pop(rb)

    def skeleton(self, a: TyVar) -> frozenset[TyVar]:
        if a not in self._parent:
            return frozenset({a})
        return frozenset(self._members[self._find(a)])

    def same_skeleton(self, a: TyVar, b: TyVar) -> bool:
        return a == b or (a in self._parent and b in self._parent
                          and self._find(a) == self._find(b))

    def skel_classes(self) -> list[frozenset[TyVar]]:
        """All registered skeleton classes, ordered by smallest member id."""
        return sorted((frozenset(m) for m in self._members.values()),
                      key=lambda s: min(a.id for a in s))

    def _drop_class(self, members: Iterable[TyVar]) -> None:
        members = set(members)
        roots = {self._find(a) for a in members if a in self._parent}
        for r in roots:
            self._members.pop(r, None)
        for a in members:
            self._parent.pop(a, None)

    # -- dirt equivalence ---------------------------------------------------

    def dirt_class(self, d: DirtVar) -> frozenset[DirtVar]:
        """The equivalence class of d generated by the dirt constraints."""
        seen = {d}
        todo = [d]
        while todo:
            x = todo.pop()
            for y in list(self.dirt_up.get(x, ())) + list(self.dirt_down.get(x, ())):
                if y not in seen:
                    seen.add(y)
                    todo.append(y)
        return frozenset(seen)

    # -- the closure operator -----------------------------------------------

    def add(self, k: Constraint) -> None:
        """C ⊎ k, in place."""
        if isinstance(k, TyLe):
            self._add_ty(k)
        elif isinstance(k, RegionLe):
            self._add_region(k)
        elif isinstance(k, InstIn):
            self._add_inst(k)
        elif isinstance(k, DirtLe):
            self._add_dirt(k)
        else:
            raise TypeError(f"not an atomic constraint: {k}")

    def _ty_edge(self, a: TyVar, b: TyVar, origin) -> None:
        if a == b:
            return
        ups = self.ty_up.setdefault(a, {})
        if b not in ups:
            ups[b] = TyLe(a, b, origin=origin)
            self.ty_down.setdefault(b, set()).add(a)

    def _add_ty(self, k: TyLe) -> None:
        a, b = k.lhs, k.rhs
        if not (isinstance(a, TyVar) and isinstance(b, TyVar)):
            raise TypeError(f"not an atomic type constraint: {k}")
        self.merge(a, b)
        lowers = {a} | self.ty_down.get(a, set())
        uppers = {b} | set(self.ty_up.get(b, {}))
        for lo in lowers:
            for up in uppers:
                self._ty_edge(lo, up, k.origin)

    def _region_edge(self, k: RegionLe) -> bool:
        if k.lhs == k.covering:
            return False
        s = self.reg_up.setdefault(k.lhs, set())
        if k in s:
            return False
        s.add(k)
        self.reg_down.setdefault(k.covering, set()).add(k)
        return True

    def _inst_edge(self, k: InstIn) -> None:
        self.inst_at.setdefault(k.covering, set()).add(k)

    def _add_region(self, k: RegionLe) -> None:
        r1, r2 = k.lhs, k.covering
        lowers = [(r1, frozenset())] + [(e.lhs, e.handled) for e in self.reg_down.get(r1, ())]
        uppers = [(r2, frozenset())] + [(e.covering, e.handled) for e in self.reg_up.get(r2, ())]
        insts = list(self.inst_at.get(r1, ()))
        for lo, j in lowers:
            for up, kk in uppers:
                self._region_edge(RegionLe(lo, up, k.handled | j | kk, origin=k.origin))
        for i in insts:
            for up, kk in uppers:
                self._inst_edge(InstIn(i.ins, up, k.handled | i.handled | kk, origin=k.origin))

    def _add_inst(self, k: InstIn) -> None:
        self._inst_edge(k)
        for e in list(self.reg_up.get(k.covering, ())):
            self._inst_edge(InstIn(k.ins, e.covering, k.handled | e.handled, origin=k.origin))

    def _dirt_edge(self, a: DirtVar, b: DirtVar, origin) -> None:
        if a == b:
            return
        ups = self.dirt_up.setdefault(a, {})
        if b not in ups:
            ups[b] = DirtLe(a, b, origin=origin)
            self.dirt_down.setdefault(b, set()).add(a)

    def _add_dirt(self, k: DirtLe) -> None:
        a, b = k.lhs, k.rhs
        lowers = {a} | self.dirt_down.get(a, set())
        uppers = {b} | set(self.dirt_up.get(b, {}))
        for lo in lowers:
            for up in uppers:
                self._dirt_edge(lo, up, k.origin)

    def insert(self, k: Constraint) -> None:
        """Store an atomic constraint as is, without closing (gc and the
        region tactics rebuild sets whose closure is already known)."""
        if isinstance(k, TyLe):
            self.merge(k.lhs, k.rhs)
            self._ty_edge(k.lhs, k.rhs, k.origin)
        elif isinstance(k, RegionLe):
            self._region_edge(k)
        elif isinstance(k, InstIn):
            self._inst_edge(k)
        elif isinstance(k, DirtLe):
            self._dirt_edge(k.lhs, k.rhs, k.origin)
        else:
            raise TypeError(f"not an atomic constraint: {k}")

    # -- removal (for re-queuing on expansion) --------------------------------

    def extract_ty(self, members: frozenset[TyVar]) -> list[TyLe]:
        """Remove and return all type constraints among `members`, and drop
        the skeleton class itself."""
        out = []
        for a in members:
            for b, k in self.ty_up.pop(a, {}).items():
                out.append(k)
                self.ty_down.get(b, set()).discard(a)
            self.ty_down.pop(a, None)
        self._drop_class(members)
        return sorted(out, key=atom_key)

    def extract_dirt(self, members: frozenset[DirtVar]) -> list[DirtLe]:
        out = []
        for a in members:
            for b, k in self.dirt_up.pop(a, {}).items():
                out.append(k)
                self.dirt_down.get(b, set()).discard(a)
            self.dirt_down.pop(a, None)
        return sorted(out, key=atom_key)

    # -- queries --------------------------------------------------------------

    def ty_constraints(self) -> list[TyLe]:
        return sorted((k for m in self.ty_up.values() for k in m.values()), key=atom_key)

    def region_constraints(self) -> list[RegionLe]:
        return sorted((k for s in self.reg_up.values() for k in s), key=atom_key)

    def inst_constraints(self) -> list[InstIn]:
        return sorted((k for s in self.inst_at.values() for k in s), key=atom_key)

    def dirt_constraints(self) -> list[DirtLe]:
        return sorted((k for m in self.dirt_up.values() for k in m.values()), key=atom_key)

    def atoms(self) -> list[Constraint]:
        return (self.ty_constraints() + self.region_constraints()
                + self.inst_constraints() + self.dirt_constraints())

    def __len__(self) -> int:
        return len(self.atoms())

    def __iter__(self):
        return iter(self.atoms())

    def __contains__(self, k) -> bool:
        if isinstance(k, TyLe):
            return k.rhs in self.ty_up.get(k.lhs, {})
        if isinstance(k, RegionLe):
            return k in self.reg_up.get(k.lhs, set())
        if isinstance(k, InstIn):
            return k in self.inst_at.get(k.covering, set())
        if isinstance(k, DirtLe):
            return k.rhs in self.dirt_up.get(k.lhs, {})
        return False

    def params(self) -> set:
        out = set(iter_params(self.atoms()))
        out |= set(self._parent)
        return out

    def key(self):
        """Order-independent identity of the atoms and skeleton classes."""
        classes = frozenset(frozenset(a.id for a in s) for s in self.skel_classes() if len(s) > 1)
        return (frozenset(atom_key(k) for k in self.atoms()), classes)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConstraintSet) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self) -> str:
        return "{" + ", ".join(str(k) for k in self.atoms()) + "}"


def closure_add(c: ConstraintSet, k: Constraint) -> ConstraintSet:
    """Functional C ⊎ k: returns a new set, leaving `c` untouched."""
    out = c.copy()
    out.add(k)
    return out


def is_unified(c: ConstraintSet) -> bool:
    """Audit atomicity and the four closure properties.

    Region compositions are accepted up to subsumption: a stored constraint
    with a smaller handled set implies the one with the larger set.
    """
    def covered_region(lhs, cov, handled):
        if lhs == cov:
            return True
        return any(e.covering == cov and e.handled <= handled for e in c.reg_up.get(lhs, ()))

    def covered_inst(ins, cov, handled):
        return any(i.ins == ins and i.handled <= handled for i in c.inst_at.get(cov, ()))

    for k in c.ty_constraints():
        if not (isinstance(k.lhs, TyVar) and isinstance(k.rhs, TyVar)):
            return False
        if not c.same_skeleton(k.lhs, k.rhs):
            return False
        for b in c.ty_up.get(k.rhs, {}):
            if b != k.lhs and b not in c.ty_up.get(k.lhs, {}):
                return False
    for k in c.dirt_constraints():
        for b in c.dirt_up.get(k.rhs, {}):
            if b != k.lhs and b not in c.dirt_up.get(k.lhs, {}):
                return False
    for k in c.region_constraints():
        for e in c.reg_up.get(k.covering, ()):
            if not covered_region(k.lhs, e.covering, k.handled | e.handled):
                return False
    for i in c.inst_constraints():
        for e in c.reg_up.get(i.covering, ()):
            if not covered_inst(i.ins, e.covering, i.handled | e.handled):
                return False
    return True


# ---------------------------------------------------------------------------
# Occur check and refresh

def occur_check(a: TyVar, ty: ParamType, c: ConstraintSet) -> bool:
    """True (a failure) when some parameter in a's skeleton occurs in ty."""
    skel = c.skeleton(a)
    return any(isinstance(p, TyVar) and p in skel for p in iter_params(ty))


def refresh(ty, fresh: Fresh, pairs: list | None = None):
    """Copy of ty with every parameter replaced by a fresh one.  Effect
    types keep inhabitedness; op regions inside rows become plain.

    When `pairs` is given, (fresh, original) type-parameter pairs are
    appended so callers can extend skeletons position by position.
    """
    if isinstance(ty, TyVar):
        new = fresh.ty()
        if pairs is not None:
            pairs.append((new, ty))
        return new
    if isinstance(ty, GROUND_TYPES):
        return ty
    if isinstance(ty, Arrow):
        return Arrow(refresh(ty.dom, fresh, pairs), refresh(ty.cod, fresh, pairs))
    if isinstance(ty, EffTy):
        return EffTy(ty.effect, fresh.region(ty.region.inhabited))
    if isinstance(ty, HandlerTy):
        return HandlerTy(refresh(ty.inp, fresh, pairs), refresh(ty.out, fresh, pairs))
    if isinstance(ty, Dirty):
        return Dirty(refresh(ty.ty, fresh, pairs), refresh(ty.row, fresh, pairs))
    if isinstance(ty, Row):
        # a copy's dirt may be smaller, so its op regions may be empty
        ops = tuple((o, fresh.region()) for o, _ in ty.ops)
        return Row(ops, fresh.dirt(ty.rest.hidden))
    raise TypeError(f"cannot refresh {ty!r}")


# ---------------------------------------------------------------------------
# The unify loop

def _head(t) -> tuple:
    if isinstance(t, GROUND_TYPES):
        return ("ground", type(t).__name__)
    if isinstance(t, EffTy):
        return ("effect", t.effect)
    return (type(t).__name__,)


class Unifier:
    """State of one unify run: σ, the unified set C and the queue."""

    def __init__(self, fresh: Fresh, cset: ConstraintSet | None = None,
                 sigma: ParamMap | None = None, tracer: Tracer | None = None) -> None:
        self.fresh = fresh
        self.cset = cset if cset is not None else ConstraintSet()
        self.sigma = sigma if sigma is not None else ParamMap()
        self.tracer = tracer
        self.queue: list[Constraint] = []

    def _trace(self) -> None:
        if self.tracer is not None:
            self.tracer(self.sigma, self.cset.copy(), list(self.queue))

    def run(self, queue: Iterable[Constraint]) -> tuple[ParamMap, ConstraintSet]:
        self.queue = list(queue)
        for k in self.queue:
            for p in iter_params(k):
                if isinstance(p, TyVar):
                    self.cset.register(p)
        self._trace()
        while self.queue:
            k = self.queue.pop(0)
            self._process(k)
            self._trace()
        return self.sigma, self.cset

    def _push(self, items: list[Constraint]) -> None:
        self.queue[:0] = items

    def _process(self, k: Constraint) -> None:
        o = k.origin
        if isinstance(k, TyLe):
            self._ty(k.lhs, k.rhs, o)
        elif isinstance(k, DirtyLe):
            self._push([TyLe(k.lhs.ty, k.rhs.ty, origin=o),
                        DirtRowLe(k.lhs.row, k.rhs.row, origin=o)])
        elif isinstance(k, DirtRowLe):
            self._rows(k)
        elif isinstance(k, DirtLe):
            self._rows(DirtRowLe(Row((), k.lhs), Row((), k.rhs), origin=o))
        elif isinstance(k, (RegionLe, InstIn)):
            self.cset.add(k)
        elif isinstance(k, SkelEq):
            self._skel(k.lhs, k.rhs, o)
        else:
            raise TypeError(f"not a constraint: {k!r}")

    # types

    def _ty(self, a, b, origin) -> None:
        if a == b:
            return
        if isinstance(a, TyVar) and isinstance(b, TyVar):
            self.cset.add(TyLe(a, b, origin=origin))
            return
        if isinstance(a, TyVar):
            img = self._expand(a, b, origin)
            self._requeue([TyLe(img, b, origin=origin)])
            return
        if isinstance(b, TyVar):
            img = self._expand(b, a, origin)
            self._requeue([TyLe(a, img, origin=origin)])
            return
        if isinstance(a, EffTy) and isinstance(b, EffTy) and a.effect == b.effect:
            self.cset.add(RegionLe(a.region, b.region, frozenset(), origin=origin))
            return
        if isinstance(a, Arrow) and isinstance(b, Arrow):
            self._push([TyLe(b.dom, a.dom, origin=origin),
                        DirtyLe(a.cod, b.cod, origin=origin)])
            return
        if isinstance(a, HandlerTy) and isinstance(b, HandlerTy):
            self._push([DirtyLe(b.inp, a.inp, origin=origin),
                        DirtyLe(a.out, b.out, origin=origin)])
            return
        raise TypeMismatch(a, b, origin)

    def _skel(self, a, b, origin) -> None:
        if a == b:
            return
        if isinstance(a, TyVar) and isinstance(b, TyVar):
            self.cset.merge(a, b)
            return
        if isinstance(b, TyVar):
            a, b = b, a
        if isinstance(a, TyVar):
            img = self._expand(a, b, origin)
            self._requeue([SkelEq(img, b, origin=origin)])
            return
        if _head(a) != _head(b):
            raise TypeMismatch(a, b, origin)
        if isinstance(a, Arrow):
            self._push([SkelEq(a.dom, b.dom, origin=origin),
                        SkelEq(a.cod.ty, b.cod.ty, origin=origin)])
        elif isinstance(a, HandlerTy):
            self._push([SkelEq(a.inp.ty, b.inp.ty, origin=origin),
                        SkelEq(a.out.ty, b.out.ty, origin=origin)])

    def _expand(self, a: TyVar, ty: ParamType, origin) -> ParamType:
        """Replace a's whole skeleton with fresh copies of ty; returns σ′(a)."""
        if occur_check(a, ty, self.cset):
            raise OccursCycle(a, ty, origin)
        members = sorted(self.cset.skeleton(a), key=lambda v: v.id)
        images: dict[TyVar, ParamType] = {}
        pairs: list[tuple[TyVar, TyVar]] = []
        for m in members:
            images[m] = refresh(ty, self.fresh, pairs)
        self._extracted = self.cset.extract_ty(frozenset(members))
        for new, orig in pairs:
            self.cset.merge(new, orig)
        self._step_sigma = ParamMap(ty=images)
        return images[a]

    def _requeue(self, main: list[Constraint]) -> None:
        step = self._step_sigma
        extracted = [step.constraint(k) for k in self._extracted]
        rest = [step.constraint(k) for k in self.queue]
        self.sigma = step.compose_after(self.sigma)
        self.queue = main + extracted + rest

    # dirt

    def _rows(self, k: DirtRowLe) -> None:
        lhs, rhs, o = k.lhs, k.rhs, k.origin
        if lhs == rhs:
            return
        lops, rops = lhs.op_names, rhs.op_names
        # ops one side lists but the other side's rest hides contribute nothing
        # on the left; on the right they can never arise from full rows
        rhs_only = {op for op in rops - lops if op not in lhs.rest.hidden}
        lhs_only = lops - rops
        if lhs_only & rhs.rest.hidden:
            raise AssertionError(f"row {lhs} lists operations hidden by {rhs}")
        if not rhs_only and not lhs_only:
            for op in sorted(lops & rops):
                self.cset.add(RegionLe(lhs.region(op), rhs.region(op), frozenset(), origin=o))
            self.cset.add(DirtLe(lhs.rest, rhs.rest, origin=o))
            return
        left = self.cset.dirt_class(lhs.rest)
        right = self.cset.dirt_class(rhs.rest)
        need: dict[DirtVar, frozenset[str]] = {}
        if left == right:
            both = frozenset(rhs_only | lhs_only)
            for d in left:
                need[d] = both - d.hidden
        else:
            for d in left:
                need[d] = frozenset(rhs_only) - d.hidden
            for d in right:
                need[d] = frozenset(lhs_only) - d.hidden
        images: dict[int, Row] = {}
        for d in sorted(need, key=lambda v: v.id):
            added = sorted(need[d])
            if not added:
                continue
            ops = tuple((op, self.fresh.region()) for op in added)
            images[d.id] = Row(ops, self.fresh.dirt(d.hidden | frozenset(added)))
        extracted = self.cset.extract_dirt(left | right)
        step = ParamMap(dirt=images)
        rest = [step.constraint(x) for x in self.queue]
        main = [step.constraint(k)]
        again = [step.constraint(x) for x in extracted]
        self.sigma = step.compose_after(self.sigma)
        self.queue = main + again + rest


def unify(queue: Iterable[Constraint], fresh: Fresh | None = None,
          cset: ConstraintSet | None = None, sigma: ParamMap | None = None,
          tracer: Tracer | None = None) -> tuple[ParamMap, ConstraintSet]:
    """Unify a queue of constraints into (σ, C).

    Raises TypeMismatch or OccursCycle when the constraints have no solution.
    """
    queue = list(queue)
    if fresh is None:
        fresh = Fresh()
        fresh.bump_past(iter_params(queue))
        if cset is not None:
            fresh.bump_past(cset.params())
    return Unifier(fresh, cset, sigma, tracer).run(queue)
