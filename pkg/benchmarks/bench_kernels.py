"""Compare the compiled and pure-Python kernel backends.

Times ``dual_active_set`` on random strictly convex QPs and ``locate_many``
on the explicit law of the mass-spring-damper case, checks that both
backends agree, and prints one line per kernel.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--qp-size 20] [--points 2000]
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from parampc import _kernels_py
from parampc.experiments import RunConfig, Setup
from parampc.qp import factor_hessian, inverse_factor, max_iterations

try:
    from parampc import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _random_qp(rng, nz, nc):
    m = rng.standard_normal((nz, nz))
    h = m @ m.T + nz * np.eye(nz)
    f = rng.standard_normal(nz) * 3
    g = rng.standard_normal((nc, nz))
    rhs = g @ (0.5 * rng.standard_normal(nz)) + rng.uniform(0.05, 1.0, nc)
    lower, _ = factor_hessian(h)
    return inverse_factor(lower), f, g, rhs


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_qp(backends, rng, nz, count, repeat):
    problems = [_random_qp(rng, nz, 2 * nz) for _ in range(count)]
    it = max_iterations(nz, 2 * nz)
    results = {}
    for name, mod in backends.items():
        results[name] = [np.asarray(mod.dual_active_set(j, f, g, r, it)[1]) for j, f, g, r in problems]
        t = _best(lambda: [mod.dual_active_set(j, f, g, r, it) for j, f, g, r in problems], repeat)
        print(f"dual_active_set  {name:<7} {count} QPs nz={nz}: {t * 1e3:9.2f} ms")
    return results


def bench_locate(backends, rng, points, repeat):
    setup = Setup.from_config(RunConfig(case="msd").resolved())
    law = setup.law("exact", 0.5)
    a, b, starts = law.packed()
    box = law.parameter_box
    xis = np.ascontiguousarray(rng.uniform(box[:, 0], box[:, 1], (points, box.shape[0])))
    results = {}
    for name, mod in backends.items():
        results[name] = np.asarray(mod.locate_many(a, b, starts, xis))
        t = _best(lambda: mod.locate_many(a, b, starts, xis), repeat)
        print(f"locate_many      {name:<7} {points} points, {len(law)} regions: {t * 1e3:9.2f} ms")
    return results


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--qp-size", type=int, default=20)
    p.add_argument("--qp-count", type=int, default=50)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    args = p.parse_args(argv)

    backends = {"python": _kernels_py}
    if _kernels_c is None:
        print("compiled kernels not built; timing the Python backend only", file=sys.stderr)
    else:
        backends["cython"] = _kernels_c
    rng = np.random.default_rng(args.seed)

    qp = bench_qp(backends, rng, args.qp_size, args.qp_count, args.repeat)
    loc = bench_locate(backends, rng, args.points, args.repeat)
    if len(backends) == 2:
        dz = max(np.max(np.abs(x - y)) for x, y in zip(qp["python"], qp["cython"]))
        same = bool(np.array_equal(loc["python"], loc["cython"]))
        print(f"agreement: max |dz| = {dz:.2e}, identical region indices = {same}")
        return 0 if dz < 1e-8 and same else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
