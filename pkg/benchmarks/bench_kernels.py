"""Benchmark the compiled kernel backend against the pure-Python one.

Times ``rk4_orbit`` on Lorenz parameters over a range of orbit lengths
and verifies bitwise agreement on every compared orbit.  Run as::

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from chaoscert._kernels import compiled_core, py_backend
from chaoscert.lorenz import REDUCED_SCALE


def time_orbit(kern, x0, h, k, p, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kern.rk4_orbit(x0, h, k, p.s, p.R, p.q)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    p = REDUCED_SCALE
    h = 100.0 / 2 ** 20
    x0 = np.array([3.70507242, -1.03262237, 53.0])
    fast = compiled_core()
    print(f"{'steps':>8} {'python':>12} {'cython':>12} {'speedup':>9}")
    for k in (16, 256, 4096, 65536):
        t_py, orbit_py = time_orbit(py_backend, x0, h, k, p)
        if fast is None:
            print(f"{k:>8} {t_py * 1e3:>10.3f}ms {'-':>12} {'-':>9}")
            continue
        t_cy, orbit_cy = time_orbit(fast, x0, h, k, p)
        assert (orbit_py == orbit_cy).all(), "backends disagree bitwise"
        print(f"{k:>8} {t_py * 1e3:>10.3f}ms {t_cy * 1e3:>10.3f}ms "
              f"{t_py / t_cy:>8.1f}x")
    if fast is None:
        print("compiled backend not available; showing python timings only")


if __name__ == "__main__":
    main()
