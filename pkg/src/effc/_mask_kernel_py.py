"""Pure-Python mask solver, used when the compiled kernel is unavailable.

Variables range over bitmasks.  A constraint
  (lhs_const, lhs_terms, rhs_const, rhs_terms, handled)
holds when  lhs ⊆ rhs ∪ ⋃· handled,  where each term is (var, table) and a
table index of -1 means the mask itself, otherwise tables[t][mask].  The
singleton union keeps only handled masks with exactly one bit set.
"""

from __future__ import annotations


def _vars_of(k) -> list[int]:
    _, lt, _, rt, hs = k
    return [v for v, _ in lt] + [v for v, _ in rt] + list(hs)


def _holds(k, assign, tables) -> bool:
    lhs, lt, rhs, rt, hs = k
    for v, t in lt:
        m = assign[v]
        lhs |= m if t < 0 else tables[t][m]
    for v, t in rt:
        m = assign[v]
        rhs |= m if t < 0 else tables[t][m]
    for h in hs:
        m = assign[h]
        if m and not m & (m - 1):
            rhs |= m
    return not lhs & ~rhs


def solve(domains, constraints, tables, limit):
    """All assignments satisfying every constraint, with an overflow flag
    set when more than `limit` were found (the list is then truncated)."""
    n = len(domains)
    by_level: list[list] = [[] for _ in range(n)]
    for k in constraints:
        vs = _vars_of(k)
        if not vs:
            if not _holds(k, (), tables):
                return [], False
            continue
        by_level[max(vs)].append(k)
    if n == 0:
        return [()], False
    out: list[tuple] = []
    assign = [0] * n
    idx = [0] * n
    level = 0
    while level >= 0:
        dom = domains[level]
        if idx[level] >= len(dom):
            idx[level] = 0
            level -= 1
            if level >= 0:
                idx[level] += 1
            continue
        assign[level] = dom[idx[level]]
        if all(_holds(k, assign, tables) for k in by_level[level]):
            if level == n - 1:
                out.append(tuple(assign))
                if len(out) > limit:
                    return out[:limit], True
                idx[level] += 1
            else:
                level += 1
        else:
            idx[level] += 1
    return out, False
