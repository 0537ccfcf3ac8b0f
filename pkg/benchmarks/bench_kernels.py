"""Compare the numba kernels with the pure-numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on the
same inputs through both paths (after one warm-up call so compilation is not
counted) and the best of ``--repeat`` runs is reported.
"""

import argparse
import timeit

import numpy as np

from srnorm import _kernels_numpy as numpy_path

try:
    from srnorm import _kernels_numba as numba_path
except ImportError:  # numba missing
    numba_path = None


def cases(rng):
    for m, n in [(16, 16), (64, 48), (256, 128)]:
        W = rng.standard_normal((m, n))
        u0 = rng.standard_normal(m)
        empty_u, empty_v = np.zeros((m, 0)), np.zeros((n, 0))
        yield f"power_sweeps {m}x{n}", "power_sweeps", (W, u0, empty_u, empty_v, 1e-10, 2000)
    for m, n in [(16, 16), (48, 32), (64, 64)]:
        A = rng.standard_normal((m, n))
        yield f"jacobi_svd {m}x{n}", "jacobi_svd", (A, m * np.finfo(float).eps, 100)
    for rows, dim in [(2000, 10), (20000, 10)]:
        arrays = [rng.standard_normal((rows, dim)) for _ in range(4)]
        yield f"pair_ratios {rows}x{dim}", "pair_ratios", tuple(arrays)


def best_time(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<28}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for label, name, kargs in cases(rng):
        t_np = best_time(getattr(numpy_path, name), kargs, args.repeat)
        if numba_path is None:
            print(f"{label:<28}{t_np * 1e3:12.3f}{'n/a':>12}{'n/a':>10}")
            continue
        t_nb = best_time(getattr(numba_path, name), kargs, args.repeat)
        print(f"{label:<28}{t_np * 1e3:12.3f}{t_nb * 1e3:12.3f}{t_np / t_nb:10.1f}x")


if __name__ == "__main__":
    main()
