"""Compare the compiled basis kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--points N] [--repeats R]

The compiled backend is selected automatically at import time; set
KANZIP_BACKEND=numpy to force the fallback for a whole process. Here both
are imported explicitly so one run times the pair and checks agreement.
"""
import argparse
import importlib
import time

import numpy as np

from kanzip.basis import BasisSpec
from kanzip.kernels import numpy_backend

CASES = {
    "bspline": BasisSpec("bspline", degree=3, grid_size=5, grid_min=-1, grid_max=1),
    "rbf": BasisSpec("rbf", num_centers=8, grid_min=-2, grid_max=2),
    "gram": BasisSpec("gram", degree=3),
}


def call(backend, spec, x, deriv):
    if spec.kind == "bspline":
        return backend.bspline_basis(x, spec.knots(), spec.degree, deriv)
    if spec.kind == "rbf":
        return backend.rbf_basis(x, spec.centers(), spec.width, deriv)
    return backend.gram_basis(x, spec.degree, deriv)


def time_backend(backend, spec, x, deriv, repeats):
    call(backend, spec, x, deriv)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        call(backend, spec, x, deriv)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=1_000_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    try:
        ckern = importlib.import_module("kanzip.kernels._ckern")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return

    x = np.random.default_rng(0).uniform(-3, 3, args.points)
    print(f"{args.points:,} points, best of {args.repeats} runs\n")
    print(f"{'case':<16}{'numpy':>10}{'compiled':>10}{'speedup':>9}{'max|diff|':>12}")
    for deriv in (False, True):
        for name, spec in CASES.items():
            t_np = time_backend(numpy_backend, spec, x, deriv, args.repeats)
            t_c = time_backend(ckern, spec, x, deriv, args.repeats)
            a = call(numpy_backend, spec, x, deriv)
            b = call(ckern, spec, x, deriv)
            diff = max(float(np.max(np.abs(a[0] - b[0]))),
                       float(np.max(np.abs(a[1] - b[1]))) if deriv else 0.0)
            label = name + ("+deriv" if deriv else "")
            print(f"{label:<16}{t_np * 1e3:>8.1f}ms{t_c * 1e3:>8.1f}ms"
                  f"{t_np / t_c:>8.2f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
