"""Compare the compiled kernels against the NumPy fallback.

Times the four hot operator applications (primal, dual, curl, curl
transpose) on one grid, checks that both backends produce the same numbers,
and optionally times the full bound pipeline per backend.

Usage:
    python3 benchmarks/backends.py --n 24 --repeats 5
    python3 benchmarks/backends.py --n 12 --full
"""

import argparse
import time

import numpy as np

from homogbound import kernels
from homogbound.coefficients import example1_field
from homogbound.grid import build_grid
from homogbound.homogenize import run_bounds
from homogbound.krylov import SolverConfig
from homogbound.operators import build_derivative_operators


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        times.append(time.perf_counter() - tic)
    return float(np.median(times))


def bench_kernels(n, repeats):
    grid = build_grid(n, n, n, 2 * np.pi, 2 * np.pi, 2 * np.pi)
    coeff = example1_field(grid)
    ops = build_derivative_operators(grid)
    tb = ops.tables
    rng = np.random.default_rng(7)
    u = rng.standard_normal(grid.shape)
    psi = rng.standard_normal((3,) + grid.shape)
    field = rng.standard_normal((3, 6) + grid.shape)

    cases = [
        ("primal_apply", lambda: kernels.primal_apply(tb, coeff.comps, u)),
        ("dual_apply", lambda: kernels.dual_apply(tb, coeff.inv_comps, psi)),
        ("curl", lambda: kernels.curl(tb, psi)),
        ("curl_t", lambda: kernels.curl_t(tb, field)),
    ]

    print(f"kernel timings, N={n} ({grid.n_vox} nodes), median of {repeats}")
    print(f"{'operation':<14}{'cython':>12}{'numpy':>12}{'speedup':>10}{'max diff':>12}")
    for name, fn in cases:
        results = {}
        timings = {}
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            results[backend] = fn()
            timings[backend] = median_time(fn, repeats)
        if len(timings) < 2:
            print(f"{name:<14}  compiled kernels not installed, numpy only: "
                  f"{timings['numpy'] * 1e3:.2f} ms")
            continue
        diff = np.abs(results["cython"] - results["numpy"]).max()
        print(
            f"{name:<14}{timings['cython'] * 1e3:>10.2f} ms"
            f"{timings['numpy'] * 1e3:>10.2f} ms"
            f"{timings['numpy'] / timings['cython']:>9.1f}x"
            f"{diff:>12.1e}"
        )


def bench_pipeline(n, rel_tol):
    grid = build_grid(n, n, n, 2 * np.pi, 2 * np.pi, 2 * np.pi)
    coeff = example1_field(grid)
    print(f"\nfull pipeline, N={n}, rel_tol={rel_tol:g}")
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        tic = time.perf_counter()
        res = run_bounds(grid, coeff, SolverConfig(rel_tol=rel_tol), threads=3)
        wall = time.perf_counter() - tic
        iters = list(map(int, res.primal.iterations)) + list(
            map(int, res.dual.iterations)
        )
        print(f"  {backend:<7} {wall:7.2f} s  CG iterations {iters}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="benchmark compiled vs NumPy operator kernels"
    )
    parser.add_argument("--n", type=int, default=24, help="voxels per edge")
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats")
    parser.add_argument(
        "--full", action="store_true", help="also time the full bound pipeline"
    )
    parser.add_argument(
        "--tol", type=float, default=1e-9, help="CG tolerance for --full"
    )
    args = parser.parse_args(argv)

    initial = kernels.current_backend()
    try:
        bench_kernels(args.n, args.repeats)
        if args.full:
            bench_pipeline(args.n, args.tol)
    finally:
        kernels.set_backend(initial)


if __name__ == "__main__":
    main()
