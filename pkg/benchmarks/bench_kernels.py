"""Compare the compiled contraction kernel against the numpy fallback.

The batched Chebyshev tensor evaluation is the hot loop of the package:
operator compositions, scope-map chains, hull sampling and ergodic orbit
averages all reduce to it.  Run:

    python3 benchmarks/bench_kernels.py [N_POINTS]

The fallback path is selected with PDRENORM_NO_EXT=1; this script runs both
in-process by calling the private contraction entry points directly, checks
they agree, and reports timings for the shapes the package actually uses.
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from pdrenorm import _kernels as K  # noqa: E402

CASES = [
    ("1-D unimodal (deg 16)", (17,)),
    ("3-D map component (deg 16)", (17, 17, 17)),
    ("4-D map component (deg 10)", (11, 11, 11, 11)),
]


def run_case(name, shape, n_points, repeats=5):
    rng = np.random.default_rng(0)
    coeffs = np.ascontiguousarray(rng.normal(size=shape))
    pts = rng.uniform(-1, 1, size=(n_points, len(shape)))
    vanders = [
        np.ascontiguousarray(K.cheb_vander(pts[:, a], shape[a] - 1))
        for a in range(len(shape))
    ]

    def timed(fn):
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = fn()
            best = min(best, time.perf_counter() - t0)
        return out, best

    slow, t_numpy = timed(lambda: K._contract_numpy(coeffs, vanders))
    if K._cheb_ext is not None:
        fast, t_ext = timed(lambda: K._cheb_ext.contract_batch(coeffs, vanders))
        err = float(np.abs(fast - slow).max())
        speedup = t_numpy / t_ext
        print(f"{name:30s} numpy {t_numpy * 1e3:8.2f} ms   "
              f"compiled {t_ext * 1e3:8.2f} ms   x{speedup:5.2f}   "
              f"max|diff| {err:.2e}")
    else:
        print(f"{name:30s} numpy {t_numpy * 1e3:8.2f} ms   "
              "compiled unavailable (built without the extension)")


def main():
    n_points = int(sys.argv[1]) if len(sys.argv) > 1 else 50000
    print(f"backend selected at import: {K.BACKEND}; batch = {n_points} points")
    for name, shape in CASES:
        run_case(name, shape, n_points)


if __name__ == "__main__":
    main()
