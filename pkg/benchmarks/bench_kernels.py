"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--base-m 32] [--layers 20]

The same arrays are fed to both implementations; the numba path is warmed
before timing so JIT compilation is excluded.
"""

import argparse
import time

import numpy as np

from fracqvi import kernels
from fracqvi import (
    FractionalParams,
    ProblemData,
    build_base_mesh,
    build_cylinder,
    build_graded_interval,
    build_system,
    default_gamma,
    make_dense_fractional,
)
from fracqvi.qvi import default_tau


def timeit(fn, repeat, *args):
    fn(*args)  # warm-up (and JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = fn(*args)
    return (time.perf_counter() - t0) / repeat, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--base-m", type=int, default=32)
    ap.add_argument("--layers", type=int, default=20)
    ap.add_argument("--s", type=float, default=0.4)
    args = ap.parse_args()

    if not kernels.USING_NUMBA:
        print("numba path unavailable (FRACQVI_PURE_NUMPY set or numba missing);"
              " timing the numpy path only.")

    base = build_base_mesh(2, args.base_m)
    gi = build_graded_interval(args.layers, default_gamma(args.s),
                               default_tau(base), args.s)
    cyl = build_cylinder(base, gi)
    fp = FractionalParams.from_order(args.s)
    load = base.vertices[:, 0] * (1 - base.vertices[:, 0]) \
        * base.vertices[:, 1] * (1 - base.vertices[:, 1])
    system = build_system(cyl, fp, ProblemData.make(base, load))
    K = system.K
    rng = np.random.default_rng(0)
    x = rng.standard_normal(K.n)
    b = rng.standard_normal(K.n)
    inv_diag = 1.0 / K.diagonal()
    print("operator: n=%d nnz=%d" % (K.n, K.data.size))

    rows = []

    t_np, _ = timeit(kernels.csr_matvec_numpy, 50, K.indptr, K.indices, K.data, x)
    row = ["csr_matvec", t_np, None]
    if kernels.USING_NUMBA:
        t_nb, _ = timeit(kernels.csr_matvec_numba, 50,
                         K.indptr, K.indices, K.data, x)
        row[2] = t_nb
    rows.append(row)

    pcg_args = (K.indptr, K.indices, K.data, inv_diag, b,
                np.zeros(K.n), 1e-10, 10 * K.n)
    t_np, (xs, iters, _) = timeit(kernels.pcg_numpy, 3, *pcg_args)
    row = ["pcg (%d iters)" % iters, t_np, None]
    if kernels.USING_NUMBA:
        t_nb, _ = timeit(kernels.pcg_numba, 3, *pcg_args)
        row[2] = t_nb
    rows.append(row)

    op = make_dense_fractional(2, 32, args.s)
    n = op.mat.shape[0]
    b_dense = np.abs(rng.standard_normal(n)) * 1e-3
    psi = np.full(n, 5e-4)
    psor_args = (op.mat, b_dense, psi, 1.5, 1e-10, 100000, np.zeros(n))
    t_np, (_, sweeps, _) = timeit(kernels.psor_numpy, 1, *psor_args)
    row = ["psor %dx%d (%d sweeps)" % (n, n, sweeps), t_np, None]
    if kernels.USING_NUMBA:
        t_nb, _ = timeit(kernels.psor_numba, 1, *psor_args)
        row[2] = t_nb
    rows.append(row)

    print()
    print("%-28s %12s %12s %9s" % ("kernel", "numpy [ms]", "numba [ms]", "speedup"))
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print("%-28s %12.3f %12s %9s" % (name, t_np * 1e3, "-", "-"))
        else:
            print("%-28s %12.3f %12.3f %8.1fx"
                  % (name, t_np * 1e3, t_nb * 1e3, t_np / t_nb))


if __name__ == "__main__":
    main()
