"""Compare the numba and numpy tridiagonal paths on diffusion-sized batches.

    python benchmarks/bench_kernels.py [--batch 4096] [--repeat 5]

Reports the best wall time per path for the raw batched Thomas solve and for
``DiffusionMap.evaluate_batch`` (KL synthesis + exp + solve), plus the max
absolute difference between the two paths' solutions.
"""
import argparse
import time

import numpy as np

from lais import _kernels
from lais.problems import DiffusionMap, build_kl_field, fem_stiffness, fem_load


def best_time(fn, repeat):
    fn()  # warm-up (numba compiles here)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=4096)
    ap.add_argument("--elements", type=int, default=512)
    ap.add_argument("--modes", type=int, default=150)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    h = 1.0 / args.elements
    coef = np.exp(0.1 * rng.standard_normal((args.batch, args.elements)))
    diag, off = fem_stiffness(coef, h)
    rhs = np.broadcast_to(fem_load(args.elements, h)[None, :, None], (args.batch, args.elements, 1)).copy()

    paths = [False] + ([True] if _kernels.HAVE_NUMBA else [])
    solve = {}
    print(f"batch={args.batch} elements={args.elements} numba={'available' if _kernels.HAVE_NUMBA else 'missing'}")
    for use in paths:
        name = "numba" if use else "numpy"
        t = best_time(lambda: _kernels.thomas_solve(diag, off, rhs, use_numba=use), args.repeat)
        solve[name] = _kernels.thomas_solve(diag, off, rhs, use_numba=use)
        print(f"thomas_solve   {name:6s} {t * 1e3:9.2f} ms  ({args.batch / t:,.0f} systems/s)")
    if len(solve) == 2:
        print(f"max |numba - numpy| = {np.max(np.abs(solve['numba'] - solve['numpy'])):.3e}")

    field = build_kl_field(elements=args.elements, modes=min(args.modes, args.elements))
    m = DiffusionMap(field)
    thetas = rng.standard_normal((args.batch, field.modes))
    for use in paths:
        name = "numba" if use else "numpy"
        saved = _kernels.HAVE_NUMBA
        _kernels.HAVE_NUMBA = use  # default path selection follows this flag
        try:
            t = best_time(lambda: m.evaluate_batch(thetas), args.repeat)
        finally:
            _kernels.HAVE_NUMBA = saved
        print(f"evaluate_batch {name:6s} {t * 1e3:9.2f} ms  ({args.batch / t:,.0f} F-evals/s)")


if __name__ == "__main__":
    main()
