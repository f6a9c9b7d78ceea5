"""Readable rendering of inferred types.

Positive dirt and region parameters are replaced by the union of their
lower bounds, skeletons share one name, and handler types that merely pass
the incoming row through print in a compact form.  All of this loses
information and is meant for people only; the stored types keep the full
constraint sets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .simplification import polarity
from .syntax import (
    GROUND_TYPES, Arrow, DirtLe, Dirty, DirtVar, EffTy, HandlerTy, InstIn, RegionLe,
    RegionVar, Row, TyVar, iter_params,
)
from .unification import ConstraintSet

REGION_DETAIL = ("full", "handled", "question", "over")


@dataclass(frozen=True)
class DisplayConfig:
    region_detail: str = "handled"
    compact_handlers: bool = True
    raw: bool = False
    ascii: bool = False

    def __post_init__(self):
        if self.region_detail not in REGION_DETAIL:
            raise ValueError(f"region detail must be one of {REGION_DETAIL}")


_UNICODE = {"arrow": "→", "handler": "⇒", "empty": "∅", "union": "∪", "sminus": "∸",
            "minus": "−", "prime": "′", "alpha": "α", "beta": "β", "gamma": "γ",
            "delta": "δ", "rho": "ρ", "star": "*", "le": "≤", "in": "∈", "sunion": "∪·"}
_ASCII = {"arrow": "->", "handler": "=>", "empty": "{}", "union": "U", "sminus": "\\-",
          "minus": "-", "prime": "'", "alpha": "a", "beta": "b", "gamma": "c",
          "delta": "d", "rho": "r", "star": "*", "le": "<=", "in": "in", "sunion": "U."}


class _Names:
    """Readable names handed out in order of first use."""

    def __init__(self, sym: dict):
        self.sym = sym
        self.ty: dict[int, str] = {}
        self.dirt: dict[int, str] = {}
        self.reg: dict[int, str] = {}

    def _next_greek(self, table: dict, letters: list[str], primed: bool) -> str:
        n = len(table)
        if n < len(letters):
            return letters[n]
        if primed:
            if n == 1:
                return letters[0] + self.sym["prime"]
            return f"{letters[0]}{n - 1}"
        return f"{letters[0]}{n - len(letters) + 1}"

    def type_name(self, key: int) -> str:
        if key not in self.ty:
            s = self.sym
            self.ty[key] = self._next_greek(self.ty, [s["alpha"], s["beta"], s["gamma"]], False)
        return self.ty[key]

    def dirt_name(self, key: int) -> str:
        if key not in self.dirt:
            self.dirt[key] = self._next_greek(self.dirt, [self.sym["delta"]], True)
        return self.dirt[key]

    def region_name(self, key: int) -> str:
        if key not in self.reg:
            self.reg[key] = self._next_greek(self.reg, [self.sym["rho"]], True)
        return self.reg[key]


class _Renderer:
    def __init__(self, cset: ConstraintSet, ty, cfg: DisplayConfig):
        self.c = cset
        self.cfg = cfg
        self.s = _ASCII if cfg.ascii else _UNICODE
        self.names = _Names(self.s)
        pn = polarity(ty, [], cset)
        self.P, self.N = pn.positive, pn.negative

    # -- parameters ---------------------------------------------------------

    def _skel_key(self, a: TyVar) -> int:
        return min(b.id for b in self.c.skeleton(a))

    def tyvar(self, a: TyVar) -> str:
        return self.names.type_name(self._skel_key(a))

    def _is_positive(self, p) -> bool:
        return p.id in self.P and p.id not in self.N

    def dirt_terms(self, d: DirtVar) -> list[str]:
        """A dirt parameter as a list of union members (empty for ∅)."""
        if not self._is_positive(d):
            return [self.names.dirt_name(d.id)]
        lows = sorted(self.c.dirt_down.get(d, ()), key=lambda x: x.id)
        return [self.names.dirt_name(x.id) for x in lows]

    # -- regions ------------------------------------------------------------

    def _lower_bounds(self, r: RegionVar):
        regs = sorted(self.c.reg_down.get(r, ()), key=lambda k: (k.lhs.id, sorted(h.id for h in k.handled)))
        insts = sorted(self.c.inst_at.get(r, ()), key=lambda k: (k.ins, sorted(h.id for h in k.handled)))
        return regs, insts

    def _handled_text(self, h: RegionVar, spaced: bool = False) -> str:
        """One subtracted handled parameter: `∸X`, or `−ins` when its sole
        lower bound is an instance."""
        regs, insts = self._lower_bounds(h)
        if not regs and len(insts) == 1 and not insts[0].handled:
            return self.s["minus"] + (" " if spaced else "") + insts[0].ins
        return self.s["sminus"] + (" " if spaced else "") + self._paren(self.region_terms(h, subtracting=True))

    def _paren(self, terms: list[str]) -> str:
        if not terms:
            return self.s["empty"]
        if len(terms) == 1:
            return terms[0]
        return "(" + f" {self.s['union']} ".join(terms) + ")"

    def region_terms(self, r: RegionVar, subtracting: bool = False) -> list[str]:
        """A region as union members; positive regions show their lower bounds."""
        if not self._is_positive(r):
            return [self.names.region_name(r.id)]
        regs, insts = self._lower_bounds(r)
        if not regs and not insts:
            return [self.names.region_name(r.id)] if subtracting else []
        entries: list[tuple[str, object, frozenset]] = []
        for k in regs:
            entries.append(("reg", k.lhs, k.handled))
        for k in insts:
            entries.append(("ins", k.ins, k.handled))
        mode = self.cfg.region_detail
        if mode == "over":
            entries = [(kind, base, frozenset()) for kind, base, _ in entries]
        if mode in ("handled", "question", "over"):
            common: dict = {}
            for kind, base, h in entries:
                key = (kind, base)
                common[key] = h if key not in common else common[key] & h
            entries = [(kind, base, h) for (kind, base), h in common.items()]
            groups: dict[frozenset, list] = {}
            for kind, base, h in entries:
                groups.setdefault(h, []).append((kind, base))
            out = []
            for h, members in sorted(groups.items(), key=lambda kv: (len(kv[0]), sorted(r.id for r in kv[0]))):
                terms = self._base_terms(members)
                if not h:
                    out.extend(terms)
                elif mode == "question":
                    out.append(self._paren_always(terms) + "?")
                else:
                    out.append(self._paren(terms) + self._subtract(h))
            return out
        out = []
        for kind, base, h in entries:
            terms = self._base_terms([(kind, base)])
            out.append(terms[0] + self._subtract(h) if h else terms[0])
        return out

    def _paren_always(self, terms: list[str]) -> str:
        return "(" + f" {self.s['union']} ".join(terms) + ")"

    def _subtract(self, h: Iterable[RegionVar]) -> str:
        return "".join(" " + self._handled_text(x, spaced=True) for x in sorted(h, key=lambda r: r.id))

    def _base_terms(self, members) -> list[str]:
        insts = sorted(b for kind, b in members if kind == "ins")
        regs = [b for kind, b in members if kind == "reg"]
        out = []
        if insts:
            out.append("{" + ", ".join(insts) + "}")
        for r in regs:
            out.extend(self.region_terms(r) or [self.s["empty"]])
        return out

    def region(self, r: RegionVar) -> str:
        return self._paren(self.region_terms(r))

    # -- dirt and types -----------------------------------------------------

    def row(self, row: Row) -> tuple[str, bool]:
        """Text of a row and whether it is a single token."""
        ops = []
        for op, r in row.ops:
            terms = self.region_terms(r)
            if terms:
                sep = f" {self.s['union']} "
                ops.append(f"{op}: {sep.join(terms)}")
        rest = self.dirt_terms(row.rest)
        union = self.s["union"]
        if not ops:
            if not rest:
                return self.s["empty"], True
            return union.join(rest), len(rest) == 1
        text = ", ".join(ops)
        if rest:
            text += " | " + union.join(rest)
        return "{" + text + "}", True

    def dirty(self, d: Dirty) -> str:
        text, _ = self.row(d.row)
        return f"{self.type(d.ty)} ! {text}"

    def _is_compound(self, t) -> bool:
        return isinstance(t, (Arrow, HandlerTy))

    def type(self, t) -> str:
        if isinstance(t, TyVar):
            return self.tyvar(t)
        if isinstance(t, GROUND_TYPES):
            return str(t)
        if isinstance(t, EffTy):
            terms = self.region_terms(t.region)
            if len(terms) == 1:
                body = terms[0]
            elif not terms:
                body = self.names.region_name(t.region.id)
            else:
                body = "(" + f" {self.s['union']} ".join(terms) + ")"
            return f"{t.effect}^{body}"
        if isinstance(t, Arrow):
            dom = self.type(t.dom)
            if self._is_compound(t.dom):
                dom = f"({dom})"
            dirt, single = self.row(t.cod.row)
            if dirt == self.s["empty"]:
                arrow = f" {self.s['arrow']} "
            elif self.cfg.ascii:
                arrow = f" {self.s['arrow']}[{dirt}] "
            elif single and not dirt.startswith("{"):
                arrow = f" {self.s['arrow']}_{dirt} "
            elif dirt.startswith("{"):
                arrow = f" {self.s['arrow']}_{dirt} "
            else:
                arrow = f" {self.s['arrow']}_{{{dirt}}} "
            cod = self.type(t.cod.ty)
            if isinstance(t.cod.ty, HandlerTy) or (
                    isinstance(t.cod.ty, Arrow) and self.row(t.cod.ty.cod.row)[0] != self.s["empty"]):
                cod = f"({cod})"
            return dom + arrow + cod
        if isinstance(t, HandlerTy):
            if self.cfg.compact_handlers:
                compact = self._compact(t)
                if compact is not None:
                    return compact
            return f"{self.dirty(t.inp)} {self.s['handler']} {self.dirty(t.out)}"
        if isinstance(t, Dirty):
            return self.dirty(t)
        raise TypeError(f"cannot display {t!r}")

    def _compact(self, t: HandlerTy) -> str | None:
        """`A ⇒[op: ∸R, +R′] B` when the outgoing row passes the incoming one through."""
        din, dout = t.inp.row.rest, t.out.row.rest
        if t.inp.row.op_names != t.out.row.op_names:
            return None
        if self._is_positive(din) or not self._is_positive(dout):
            return None
        if set(self.c.dirt_down.get(dout, ())) != {din}:
            return None
        parts = []
        for op, r_in in t.inp.row.ops:
            r_out = t.out.row.region(op)
            if self._is_positive(r_in) or not self._is_positive(r_out):
                return None
            regs, insts = self._lower_bounds(r_out)
            through = [k for k in regs if k.lhs == r_in]
            if not through:
                return None
            handled = frozenset.intersection(*(k.handled for k in through))
            items = [self._handled_text(h) for h in sorted(handled, key=lambda r: r.id)]
            extra = [("reg", k.lhs, k.handled) for k in regs if k.lhs != r_in]
            extra += [("ins", k.ins, k.handled) for k in insts]
            for kind, base, h in extra:
                terms = self._base_terms([(kind, base)])
                text = self._paren(terms) + (self._subtract(h) if h else "")
                items.append("+" + text)
            if items:
                parts.append(f"{op}: " + " ".join(items).replace(" +", ", +"))
        inner = self.type(t.inp.ty)
        if self._is_compound(t.inp.ty):
            inner = f"({inner})"
        outer = self.type(t.out.ty)
        if self._is_compound(t.out.ty):
            outer = f"({outer})"
        h = self.s["handler"]
        if parts:
            return f"{inner} {h}[{', '.join(parts)}] {outer}"
        return f"{inner} {h} {outer}"


def display_scheme(ty, cset: ConstraintSet, cfg: DisplayConfig | None = None) -> str:
    """Render a type under a unified, simplified constraint set."""
    cfg = cfg or DisplayConfig()
    if cfg.raw:
        return display_raw(ty, cset.atoms(), ascii=cfg.ascii)
    return _Renderer(cset, ty, cfg).type(ty)


# ---------------------------------------------------------------------------
# Raw rendering (canonical numbering, every constraint shown)

class _RawNames:
    def __init__(self, sym):
        self.sym = sym
        self.map: dict[tuple, str] = {}
        self.counts = {"ty": 0, "reg": 0, "dirt": 0}

    def __call__(self, p) -> str:
        kind = "ty" if isinstance(p, TyVar) else "reg" if isinstance(p, RegionVar) else "dirt"
        key = (kind, p.id)
        if key not in self.map:
            self.counts[kind] += 1
            n = self.counts[kind]
            s = self.sym
            if kind == "ty":
                self.map[key] = f"{s['alpha']}{n}"
            elif kind == "dirt":
                self.map[key] = f"{s['delta']}{n}"
            else:
                star = s["star"] if p.inhabited else ""
                self.map[key] = f"{s['rho']}{star}{n}"
        return self.map[key]


def _raw_type(t, nm: _RawNames, s) -> str:
    if isinstance(t, (TyVar, RegionVar, DirtVar)):
        return nm(t)
    if isinstance(t, GROUND_TYPES):
        return str(t)
    if isinstance(t, EffTy):
        return f"{t.effect}^{nm(t.region)}"
    if isinstance(t, Row):
        if not t.ops:
            return nm(t.rest)
        ops = ", ".join(f"{o}: {nm(r)}" for o, r in t.ops)
        return "{" + ops + " | " + nm(t.rest) + "}"
    if isinstance(t, Dirty):
        return f"{_raw_type(t.ty, nm, s)} ! {_raw_type(t.row, nm, s)}"
    if isinstance(t, Arrow):
        return f"({_raw_type(t.dom, nm, s)} {s['arrow']} {_raw_type(t.cod, nm, s)})"
    if isinstance(t, HandlerTy):
        return f"({_raw_type(t.inp, nm, s)} {s['handler']} {_raw_type(t.out, nm, s)})"
    raise TypeError(f"cannot display {t!r}")


def _raw_constraint(k, nm: _RawNames, s) -> str:
    def handled(h):
        if not h:
            return ""
        return f" {s['sunion']} " + ", ".join(nm(r) for r in sorted(h, key=lambda r: r.id))

    if isinstance(k, RegionLe):
        return f"{nm(k.lhs)} {s['le']} {nm(k.covering)}{handled(k.handled)}"
    if isinstance(k, InstIn):
        return f"{k.ins} {s['in']} {nm(k.covering)}{handled(k.handled)}"
    if hasattr(k, "lhs") and hasattr(k, "rhs"):
        rel = "≈" if type(k).__name__ == "SkelEq" else s["le"]
        if s is _ASCII and rel == "≈":
            rel = "~"
        return f"{_raw_type(k.lhs, nm, s)} {rel} {_raw_type(k.rhs, nm, s)}"
    raise TypeError(f"cannot display {k!r}")


def display_raw(ty, constraints: Iterable, ascii: bool = False) -> str:
    s = _ASCII if ascii else _UNICODE
    nm = _RawNames(s)
    head = _raw_type(ty, nm, s) if ty is not None else ""
    ks = [_raw_constraint(k, nm, s) for k in constraints]
    if not ks:
        return head
    return f"{head} | " + ", ".join(ks) if head else ", ".join(ks)


def display_constraints(constraints: Iterable, ascii: bool = False) -> list[str]:
    """Each constraint on its own, named consistently across the list."""
    s = _ASCII if ascii else _UNICODE
    nm = _RawNames(s)
    return [_raw_constraint(k, nm, s) for k in constraints]


# ---------------------------------------------------------------------------
# Dirt stage and its inverse

def dirt_unions(ty, cset: ConstraintSet) -> dict[DirtVar, tuple[DirtVar, ...]]:
    """The dirt stage of display: each positive dirt parameter of ty mapped
    to the negative parameters whose union replaces it."""
    pn = polarity(ty, [], cset)
    out = {}
    for p in iter_params(ty):
        if isinstance(p, DirtVar) and p.id in pn.positive and p.id not in pn.negative:
            out[p] = tuple(sorted(cset.dirt_down.get(p, ()), key=lambda d: d.id))
    return out


_SHOWN = re.compile(r"\s*(\S+)\s+shown as\s+(.+)")


def recover_dirt_bounds(unions) -> set[DirtLe]:
    """Rebuild the dirt constraints from displayed unions.

    Accepts the mapping produced by `dirt_unions`, or text such as
    "δ2 shown as δ1∪δ4, δ3 shown as δ1" where names end in their ids.
    """
    if isinstance(unions, str):
        parsed: dict[DirtVar, tuple[DirtVar, ...]] = {}
        for part in re.split(r",\s*(?=\S+\s+shown as)", unions.strip()):
            if not part.strip():
                continue
            m = _SHOWN.match(part)
            if not m:
                raise ValueError(f"cannot read {part!r}")
            target = _dirt_from_name(m.group(1))
            body = m.group(2).strip()
            if body in ("∅", "{}"):
                parsed[target] = ()
            else:
                parsed[target] = tuple(_dirt_from_name(x) for x in re.split(r"∪|U", body))
        unions = parsed
    out = set()
    for upper, lowers in unions.items():
        for lo in lowers:
            out.add(DirtLe(lo, upper))
    return out


def _dirt_from_name(name: str) -> DirtVar:
    m = re.search(r"(\d+)$", name.strip())
    if not m:
        raise ValueError(f"dirt name without an id: {name!r}")
    return DirtVar(int(m.group(1)))
