"""Compiled vs pure-Python sparse LDL kernels.

Times ordering plus symbolic analysis, numeric factorization and one solve on
quasi-definite test matrices, then a whole interior-point run on an LP
relaxation.  Run with ``python benchmarks/bench_kernels.py``.
"""

import argparse
import time
import warnings

import numpy as np
import scipy.sparse as sp

from poolrelax import _kernels
from poolrelax.conic.ipm import solve
from poolrelax.conic.kkt import LdlFactor
from poolrelax.generate import family_spec, generate
from poolrelax.qcqp import build_qcqp
from poolrelax.relax import RELAX_CONFIG, lift, make_lp


def quasi_definite(n1, n2, density, seed):
    rng = np.random.default_rng(seed)
    H = sp.random(n1, n1, density=density, random_state=rng)
    H = (H @ H.T + sp.identity(n1)).tocoo()
    B = sp.random(n2, n1, density=density, random_state=rng).tocoo()
    E = sp.diags(rng.uniform(0.5, 2.0, n2)).tocoo()
    U = sp.triu(sp.bmat([[H, B.T], [B, -E]]).tocsr()).tocoo()
    return U.row, U.col, U.data, np.r_[np.ones(n1), -np.ones(n2)]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_factor(kern, n1, n2, density, repeat):
    r, c, v, signs = quasi_definite(n1, n2, density, seed=n1)
    n = n1 + n2
    t_sym = best_of(lambda: LdlFactor(n, r, c, signs, kernels=kern), repeat)
    f = LdlFactor(n, r, c, signs, kernels=kern)
    t_num = best_of(lambda: f.factor(v), repeat)
    b = np.ones(n)
    t_sol = best_of(lambda: f.solve(b), repeat)
    return t_sym, t_num, t_sol


def bench_ipm(kern, shape):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        inst = generate(family_spec(*shape, seed=0))
    prog = make_lp(lift(build_qcqp(inst)))
    t0 = time.perf_counter()
    sol = solve(prog, RELAX_CONFIG, kernels=kern)
    return time.perf_counter() - t0, sol.status, sol.iters


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--shape", default="1,2,1,4", help="instance shape for the interior-point run")
    args = ap.parse_args(argv)
    kernels = {"python": _kernels.fallback}
    if _kernels.compiled is not None:
        kernels["compiled"] = _kernels.compiled
    else:
        print("compiled extension not built; timing the Python kernels only")

    print(f"{'matrix':>18} {'kernels':>9} {'analyse':>9} {'factor':>9} {'solve':>9}")
    for n1, n2, density in [(200, 100, 0.02), (600, 300, 0.005), (1500, 700, 0.002)]:
        for name, kern in kernels.items():
            t = bench_factor(kern, n1, n2, density, args.repeat)
            print(f"{f'{n1}+{n2} @ {density}':>18} {name:>9} " + " ".join(f"{x * 1e3:8.2f}ms" for x in t))

    shape = tuple(int(s) for s in args.shape.split(","))
    print(f"\ninterior-point run on the LP relaxation of shape {shape}")
    for name, kern in kernels.items():
        dt, status, iters = bench_ipm(kern, shape)
        print(f"{name:>9}: {dt:7.2f}s  {status} after {iters} iterations")


if __name__ == "__main__":
    main()
