"""Helpers shared by the test modules: matching printed constraints up to a
renaming of parameters, and corpus loading."""

from __future__ import annotations

import glob
import os
import re
from collections import Counter

from effc.surface import TopLet, TopLetRec, parse_program

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
WELLTYPED = sorted(glob.glob(os.path.join(ROOT, "programs", "welltyped", "*.effc")))
ILLTYPED = sorted(glob.glob(os.path.join(ROOT, "programs", "illtyped", "*.effc")))

# α1, αx, ρ*3, ρ12, δ′ ... ; the inhabitedness star is ignored when matching.
_PARAM = re.compile(r"(α|ρ\*?|δ)([0-9a-z_′]+)")


def _template(text: str) -> tuple[str, list[tuple[str, str]]]:
    params = []

    def repl(m):
        kind = m.group(1)[0]
        params.append((kind, m.group(2)))
        return kind

    return _PARAM.sub(repl, text), params


def chain(*names: str) -> list[str]:
    """'a ≤ b ≤ c' as its transitive closure."""
    return [f"{a} ≤ {b}" for i, a in enumerate(names) for b in names[i + 1:]]


def match_up_to_renaming(actual, expected) -> dict | None:
    """A kind-preserving bijection of parameter names taking the multiset of
    `expected` strings onto `actual`, or None."""
    act = [_template(str(a)) for a in actual]
    exp = [_template(str(e)) for e in expected]
    if Counter(t for t, _ in act) != Counter(t for t, _ in exp):
        return None
    order = sorted(range(len(exp)),
                   key=lambda i: sum(1 for t, _ in act if t == exp[i][0]))
    used = [False] * len(act)

    def extend(fwd, bwd, eparams, aparams):
        fwd, bwd = dict(fwd), dict(bwd)
        for e, a in zip(eparams, aparams):
            if fwd.get(e, a) != a or bwd.get(a, e) != e:
                return None
            fwd[e], bwd[a] = a, e
        return fwd, bwd

    def go(k, fwd, bwd):
        if k == len(order):
            return fwd
        tmpl, eparams = exp[order[k]]
        for j, (t, aparams) in enumerate(act):
            if used[j] or t != tmpl:
                continue
            nxt = extend(fwd, bwd, eparams, aparams)
            if nxt is None:
                continue
            used[j] = True
            found = go(k + 1, *nxt)
            used[j] = False
            if found is not None:
                return found
        return None

    return go(0, {}, {})


def load(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())


def run_directives(program):
    """(values so far, run directive) pairs in program order."""
    values = []
    for d in program.bindings():
        if isinstance(d, TopLet):
            values.append((d.name, d.value))
        elif isinstance(d, TopLetRec):
            values.append((d.name, d.as_value()))
        else:
            yield list(values), d
