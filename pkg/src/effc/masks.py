"""Bitmask constraint solving for region and dirt parameters.

The compiled kernel is used when it was built; otherwise the pure-Python
version takes over with the same results.
"""

from __future__ import annotations

try:
    from ._mask_kernel import solve as _solve
    BACKEND = "cython"
except ImportError:  # not compiled in this environment
    from ._mask_kernel_py import solve as _solve
    BACKEND = "python"

from ._mask_kernel_py import solve as solve_python


def solve(domains, constraints, tables, limit=1_000_000):
    """See `_mask_kernel_py` for the constraint format."""
    return _solve([list(d) for d in domains], list(constraints), [list(t) for t in tables], limit)


__all__ = ["BACKEND", "solve", "solve_python"]
