"""Time the compiled mask solver against the pure-Python one.

    python3 bench/bench_kernel.py --vars 8 --bits 3 --constraints 10 --repeat 20
"""

from __future__ import annotations

import argparse
import random
import statistics
import time

from effc import masks
from effc._mask_kernel_py import solve as solve_python


def random_problem(rng: random.Random, n_vars: int, bits: int, n_constraints: int,
                   n_tables: int = 2):
    size = 1 << bits
    domains = [list(range(size)) for _ in range(n_vars)]
    tables = [[rng.randrange(size) | m for m in range(size)] for _ in range(n_tables)]
    constraints = []
    for _ in range(n_constraints):
        def side():
            return [(rng.randrange(n_vars), rng.choice([-1] + list(range(n_tables))))
                    for _ in range(rng.randint(0, 2))]
        handled = tuple(rng.randrange(n_vars) for _ in range(rng.randint(0, 1)))
        constraints.append((rng.randrange(size) if rng.random() < 0.2 else 0, side(),
                            0, side(), handled))
    return domains, constraints, tables


def _time(fn, problems, limit) -> tuple[float, int]:
    t0 = time.perf_counter()
    found = 0
    for domains, ks, tables in problems:
        sols, _ = fn(domains, ks, tables, limit)
        found += len(sols)
    return time.perf_counter() - t0, found


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vars", type=int, default=8)
    ap.add_argument("--bits", type=int, default=3)
    ap.add_argument("--constraints", type=int, default=10)
    ap.add_argument("--problems", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--limit", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = random.Random(args.seed)
    problems = [random_problem(rng, args.vars, args.bits, args.constraints)
                for _ in range(args.problems)]
    print(f"backend in use: {masks.BACKEND}")
    rows = [("python", solve_python)]
    if masks.BACKEND == "cython":
        from effc._mask_kernel import solve as solve_cython
        rows.insert(0, ("cython", solve_cython))
    results = {}
    for name, fn in rows:
        times = []
        for _ in range(args.repeat):
            t, found = _time(fn, problems, args.limit)
            times.append(t)
        results[name] = (statistics.median(times), found)
        print(f"{name:>7}: median {results[name][0]:.4f} s over {args.repeat} runs, "
              f"{found} solutions")
    if len(results) == 2:
        counts = {found for _, found in results.values()}
        speedup = results["python"][0] / max(results["cython"][0], 1e-9)
        print(f"speedup: {speedup:.1f}x, same solution count: {len(counts) == 1}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
