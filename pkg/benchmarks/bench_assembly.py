"""Time stencil assembly: compiled kernel against the numpy fallback.

    python benchmarks/bench_assembly.py [--sizes 64 128 256] [--repeat 5]
"""
import argparse
import timeit

import numpy as np
import scipy.sparse as sp

from convexreg import kernels
from convexreg.coefficients import checkerboard
from convexreg.geometry import ConvexDomain, CubeSpec
from convexreg.presets import Manufactured
from convexreg.solver import make_problem, stencil_inputs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    print(f"{'N':>6} {'unknowns':>10} {'numpy [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    dom = ConvexDomain.graph_domain("quadratic", 2)
    for N in args.sizes:
        problem = make_problem(dom, CubeSpec(1.0, 1.0), 1.0 / N, checkerboard(2, 0.5, seed=1),
                               Manufactured())
        inputs = stencil_inputs(problem)
        size = inputs[6].size

        def timed(fn):
            return min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat))

        t_py = timed(kernels.assemble_stencil_py)
        if kernels.BACKEND != "cython":
            print(f"{N:>6} {size:>10} {1e3 * t_py:>12.2f} {'-':>12} {'-':>8}")
            continue
        mats = []
        for fn in (kernels.assemble_stencil_py, kernels.assemble_stencil):
            rows, cols, vals, rhs = fn(*inputs)
            mats.append((sp.csr_matrix((vals, (rows, cols)), shape=(size, size)), rhs))
        gap = abs(mats[0][0] - mats[1][0]).max() if (mats[0][0] - mats[1][0]).nnz else 0.0
        assert gap <= 1e-12 * abs(mats[0][0]).max(), "backends disagree"
        assert np.allclose(mats[0][1], mats[1][1], rtol=1e-13, atol=0.0), "backends disagree"
        t_c = timed(kernels.assemble_stencil)
        print(f"{N:>6} {size:>10} {1e3 * t_py:>12.2f} {1e3 * t_c:>12.2f} {t_py / t_c:>8.2f}")


if __name__ == "__main__":
    main()
