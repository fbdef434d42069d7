"""Compare the numba and numpy circulant log-sum-exp kernels.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256 512] [--repeat 5]

Reports the best-of-``repeat`` wall time per call and the max difference
between the two paths.  A full log-domain Sinkhorn solve (method="lse") is
timed as well, toggling the kernel through ``use_numba``.
"""
from __future__ import annotations

import argparse
import timeit
from unittest import mock

import numpy as np

from torus_sb import _kernels
from torus_sb import eot as E
from torus_sb.grid import PeriodicGrid
from torus_sb.heatkernel import log_kernel_row


def best(fn, repeat: int) -> float:
    fn()  # warm-up (numba compilation, caches)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernel(n: int, repeat: int, rng) -> tuple[float, float, float]:
    logk = log_kernel_row(n, 0.05) + np.log(2 * np.pi / n)
    a = rng.normal(size=(1, n))
    t_nb = best(lambda: _kernels.lse_circulant_rows(a, logk, use_numba=True), repeat)
    t_np = best(lambda: _kernels.lse_circulant_rows(a, logk, use_numba=False), repeat)
    diff = np.max(np.abs(_kernels.lse_circulant_rows(a, logk, True) - _kernels.lse_circulant_rows(a, logk, False)))
    return t_nb, t_np, float(diff)


def bench_sinkhorn(n: int, use_numba: bool) -> float:
    g = PeriodicGrid(1, n)
    x = g.axis_nodes
    mu = (1 + 0.5 * np.cos(x)) / (2 * np.pi)
    nu = (1 + 0.3 * np.sin(2 * x)) / (2 * np.pi)
    orig = _kernels.lse_circulant_rows

    def patched(A, logk, flag=None):
        return orig(A, logk, use_numba)

    with mock.patch.object(_kernels, "lse_circulant_rows", patched):
        E._operator.cache_clear()
        return best(lambda: E.eot(g, mu, nu, 0.1, method="lse", tol=1e-10), 1)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable (or disabled via TORUS_SB_DISABLE_NUMBA); nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'n':>6} {'numba [ms]':>12} {'numpy [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for n in args.sizes:
        t_nb, t_np, diff = bench_kernel(n, args.repeat, rng)
        print(f"{n:>6} {1e3 * t_nb:>12.3f} {1e3 * t_np:>12.3f} {t_np / t_nb:>8.1f} {diff:>10.1e}")
    print()
    print(f"{'n':>6} {'sinkhorn numba [s]':>19} {'sinkhorn numpy [s]':>19}")
    for n in args.sizes[:3]:
        print(f"{n:>6} {bench_sinkhorn(n, True):>19.3f} {bench_sinkhorn(n, False):>19.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
