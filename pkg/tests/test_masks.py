from __future__ import annotations

from hypothesis import given, settings, strategies as st

from effc import masks
from effc._mask_kernel_py import solve as solve_python

BITS = 3
SIZE = 1 << BITS


@st.composite
def problems(draw):
    n_vars = draw(st.integers(1, 5))
    tables = [draw(st.lists(st.integers(0, SIZE - 1), min_size=SIZE, max_size=SIZE))
              for _ in range(2)]
    domains = [sorted(draw(st.sets(st.integers(0, SIZE - 1), min_size=1))) for _ in range(n_vars)]
    term = st.tuples(st.integers(0, n_vars - 1), st.sampled_from([-1, 0, 1]))
    constraint = st.tuples(st.integers(0, SIZE - 1), st.lists(term, max_size=2),
                           st.integers(0, SIZE - 1), st.lists(term, max_size=2),
                           st.lists(st.integers(0, n_vars - 1), max_size=1).map(tuple))
    return domains, draw(st.lists(constraint, max_size=6)), tables


def test_backend_is_known():
    assert masks.BACKEND in ("cython", "python")


@settings(max_examples=300, deadline=None)
@given(problems())
def test_backends_agree(problem):
    domains, ks, tables = problem
    fast, fast_over = masks.solve(domains, ks, tables, 10_000)
    slow, slow_over = solve_python(domains, ks, tables, 10_000)
    assert fast_over == slow_over
    assert sorted(map(tuple, fast)) == sorted(map(tuple, slow))


@settings(max_examples=100, deadline=None)
@given(problems())
def test_solutions_satisfy_every_constraint(problem):
    domains, ks, tables = problem
    sols, _ = solve_python(domains, ks, tables, 10_000)
    for sol in sols:
        assert all(sol[i] in domains[i] for i in range(len(domains)))
        for lhs, lt, rhs, rt, hs in ks:
            for v, t in lt:
                lhs |= sol[v] if t < 0 else tables[t][sol[v]]
            for v, t in rt:
                rhs |= sol[v] if t < 0 else tables[t][sol[v]]
            for h in hs:
                if sol[h] and not sol[h] & (sol[h] - 1):
                    rhs |= sol[h]
            assert not lhs & ~rhs


def test_overflow_flag():
    domains = [list(range(SIZE))] * 2
    for solve in (masks.solve, solve_python):
        sols, over = solve(domains, [], [], 10)
        assert over and len(sols) == 10
        sols, over = solve(domains, [], [], 64)
        assert not over and len(sols) == 64
