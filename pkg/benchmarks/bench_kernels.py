"""Time the numba kernels against their pure-numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is run once per back end to warm up (numba compiles on first
call), then timed as the best of ``--repeat`` runs. Outputs are compared
so a speedup never hides a disagreement.
"""

import argparse
import time

import numpy as np

from tandemqbd import kernels
from tandemqbd._accel import HAVE_NUMBA
from tandemqbd.model import TandemParams, build_blocks
from tandemqbd.oracle import TruncatedChain, jump_table, solve_stationary_direct
from tandemqbd.orthopoly import Kind, PolyFamily, symmetric_tridiagonal


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(quick):
    p = TandemParams(1.0, 3.0, 2.0)
    n = 200 if quick else 800
    d, e = symmetric_tridiagonal(PolyFamily(p, 0.6, Kind.PHAT), n)
    yield "tridiag_eigvalsh n=%d" % n, lambda b: kernels.tridiag_eigvalsh(d, e, backend=b)

    x = np.linspace(-8.0, 0.0, 2000)
    fam = PolyFamily(p, 0.6, Kind.P)
    deg = 200 if quick else 1000
    yield "scaled_recurrence n=%d x=2000" % deg, lambda b: kernels.scaled_recurrence(x, deg, *fam.coefficients(), backend=b)[0]

    cap = 40 if quick else 80
    chain = TruncatedChain.tandem(p, cap, cap, boundary="jackson")
    yield "gth %dx%d" % (cap, cap), lambda b: solve_stationary_direct(chain, backend=b).pi

    blocks = build_blocks(p.with_capacity(1))
    table = jump_table(blocks)
    reps = 100_000 if quick else 1_000_000
    yield "simulate_level_hits reps=%d" % reps, lambda b: kernels.simulate_level_hits(*table, 1, 0, 3, reps, 7, backend=b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba not importable: only the numpy path is timed")
    print(f"{'kernel':36s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s}  max|diff|")
    for name, fn in cases(args.quick):
        t_np, out_np = best_of(lambda: fn("numpy"), args.repeat)
        if HAVE_NUMBA:
            t_nb, out_nb = best_of(lambda: fn("numba"), args.repeat)
            diff = float(np.max(np.abs(np.asarray(out_np, float) - np.asarray(out_nb, float))))
            print(f"{name:36s} {t_np:11.4f} {t_nb:11.4f} {t_np / t_nb:8.1f}  {diff:.2e}")
        else:
            print(f"{name:36s} {t_np:11.4f} {'-':>11s} {'-':>8s}")


if __name__ == "__main__":
    main()
