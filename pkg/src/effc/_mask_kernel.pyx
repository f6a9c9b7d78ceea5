# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled mask solver; same contract as _mask_kernel_py.solve."""

from libc.stdlib cimport malloc, free


cdef inline bint _holds(long *cons, long start, long *assign, long *tabs,
                        long tab_width):
    cdef long lhs = cons[start]
    cdef long nl = cons[start + 1]
    cdef long p = start + 2
    cdef long i, v, t, m, rhs, nr, nh
    for i in range(nl):
        v = cons[p]; t = cons[p + 1]; p += 2
        m = assign[v]
        lhs |= m if t < 0 else tabs[t * tab_width + m]
    rhs = cons[p]
    nr = cons[p + 1]
    p += 2
    for i in range(nr):
        v = cons[p]; t = cons[p + 1]; p += 2
        m = assign[v]
        rhs |= m if t < 0 else tabs[t * tab_width + m]
    nh = cons[p]
    p += 1
    for i in range(nh):
        m = assign[cons[p + i]]
        if m and not (m & (m - 1)):
            rhs |= m
    return not (lhs & ~rhs)


def solve(domains, constraints, tables, limit):
    cdef long n = len(domains)
    cdef long width = 0
    cdef long i, j, level, total, pos
    for row in tables:
        if len(row) > width:
            width = len(row)
    by_level = [[] for _ in range(n)]
    pending = []
    for k in constraints:
        lc, lt, rc, rt, hs = k
        vs = [v for v, _ in lt] + [v for v, _ in rt] + list(hs)
        flat = [lc, len(lt)]
        for v, t in lt:
            flat += [v, t]
        flat += [rc, len(rt)]
        for v, t in rt:
            flat += [v, t]
        flat += [len(hs)] + list(hs)
        if not vs:
            pending.append(flat)
        else:
            by_level[max(vs)].append(flat)
    if n == 0:
        return [()], False

    total = sum(len(f) for lv in by_level for f in lv) + sum(len(f) for f in pending) + 1
    cdef long *cons = <long *> malloc(total * sizeof(long))
    cdef long *starts = <long *> malloc((sum(len(lv) for lv in by_level) + len(pending) + 1) * sizeof(long))
    cdef long *lvl_from = <long *> malloc((n + 1) * sizeof(long))
    cdef long *tabs = <long *> malloc((len(tables) * width + 1) * sizeof(long))
    cdef long *assign = <long *> malloc(n * sizeof(long))
    cdef long *idx = <long *> malloc(n * sizeof(long))
    cdef long *dsize = <long *> malloc(n * sizeof(long))
    cdef long *doff = <long *> malloc((n + 1) * sizeof(long))
    cdef long *dvals = <long *> malloc((sum(len(d) for d in domains) + 1) * sizeof(long))
    cdef long ci = 0
    cdef bint ok
    out = []
    overflow = False
    try:
        pos = 0
        for f in pending:
            starts[ci] = pos
            for x in f:
                cons[pos] = x
                pos += 1
            if not _holds(cons, starts[ci], assign, tabs, width):
                return [], False
        for level in range(n):
            lvl_from[level] = ci
            for f in by_level[level]:
                starts[ci] = pos
                ci += 1
                for x in f:
                    cons[pos] = x
                    pos += 1
        lvl_from[n] = ci
        for i in range(len(tables)):
            for j in range(len(tables[i])):
                tabs[i * width + j] = tables[i][j]
        pos = 0
        for i in range(n):
            doff[i] = pos
            dsize[i] = len(domains[i])
            for x in domains[i]:
                dvals[pos] = x
                pos += 1
            idx[i] = 0
            assign[i] = 0
        level = 0
        while level >= 0:
            if idx[level] >= dsize[level]:
                idx[level] = 0
                level -= 1
                if level >= 0:
                    idx[level] += 1
                continue
            assign[level] = dvals[doff[level] + idx[level]]
            ok = True
            for j in range(lvl_from[level], lvl_from[level + 1]):
                if not _holds(cons, starts[j], assign, tabs, width):
                    ok = False
                    break
            if ok:
                if level == n - 1:
                    out.append(tuple([assign[i] for i in range(n)]))
                    if len(out) > limit:
                        overflow = True
                        out = out[:limit]
                        break
                    idx[level] += 1
                else:
                    level += 1
            else:
                idx[level] += 1
    finally:
        free(cons); free(starts); free(lvl_from); free(tabs)
        free(assign); free(idx); free(dsize); free(doff); free(dvals)
    return out, overflow
