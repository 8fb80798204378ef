"""Hot numerical kernels with two interchangeable implementations.

The default path compiles the inner loops with numba's ``@njit``.  Setting
the environment variable ``FRACQVI_PURE_NUMPY=1`` (or running without numba
installed) selects a vectorized pure-numpy fallback instead.  Both paths
implement identical algorithms; ``benchmarks/bench_kernels.py`` times them
against each other.

All CSR arguments assume sorted column indices and no empty rows (every
operator here carries its diagonal).
"""

import os

import numpy as np


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


FORCE_NUMPY = _env_flag("FRACQVI_PURE_NUMPY")

if FORCE_NUMPY:
    njit = None
else:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - mirror environments without numba
        njit = None

USING_NUMBA = njit is not None


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def csr_matvec_numpy(indptr, indices, data, x):
    """y = A @ x for CSR triples (no empty rows)."""
    return np.add.reduceat(data * x[indices], indptr[:-1])


def pcg_numpy(indptr, indices, data, inv_diag, b, x0, rel_tol, max_iter):
    """Jacobi-preconditioned CG on CSR data.

    Returns (x, iterations, residual_history).  The recursive residual is
    replaced by the true residual whenever the stopping test fires, so the
    reported history ends with a genuinely verified residual norm.
    """
    x = x0.copy()
    r = b - csr_matvec_numpy(indptr, indices, data, x)
    hist = np.empty(max_iter + 1)
    hist[0] = np.sqrt(r @ r)
    b_norm = np.sqrt(b @ b)
    if b_norm == 0.0:
        return np.zeros_like(b), 0, hist[:1] * 0.0
    tol = rel_tol * b_norm
    if hist[0] <= tol:
        return x, 0, hist[:1]
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    k = 0
    while k < max_iter:
        Ap = csr_matvec_numpy(indptr, indices, data, p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        k += 1
        res = np.sqrt(r @ r)
        if res <= tol:
            # guard against drift of the recursive residual
            r = b - csr_matvec_numpy(indptr, indices, data, x)
            res = np.sqrt(r @ r)
            hist[k] = res
            if res <= tol:
                break
        else:
            hist[k] = res
        z = inv_diag * r
        rz_new = r @ z
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    return x, k, hist[: k + 1].copy()


def psor_numpy(A, b, psi, omega, tol, max_sweeps, u0):
    """Projected SOR for dense SPD A with upper bound u <= psi.

    Fixed ascending sweep order; returns (u, sweeps, last_max_change).
    """
    u = u0.copy()
    n = b.shape[0]
    diag = np.diag(A).copy()
    sweeps = 0
    change = np.inf
    while sweeps < max_sweeps:
        change = 0.0
        for i in range(n):
            row_dot = A[i] @ u
            u_gs = u[i] + (b[i] - row_dot) / diag[i]
            u_new = u[i] + omega * (u_gs - u[i])
            if u_new > psi[i]:
                u_new = psi[i]
            delta = abs(u_new - u[i])
            if delta > change:
                change = delta
            u[i] = u_new
        sweeps += 1
        if change < tol:
            break
    return u, sweeps, change


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USING_NUMBA:

    # dots are written as explicit loops: numba lowers `@` to BLAS, whose
    # threading can dominate at these vector sizes

    @njit(cache=True)
    def _dot(a, b):
        acc = 0.0
        for i in range(a.shape[0]):
            acc += a[i] * b[i]
        return acc

    @njit(cache=True)
    def csr_matvec_numba(indptr, indices, data, x):
        n = indptr.shape[0] - 1
        y = np.empty(n)
        for i in range(n):
            acc = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                acc += data[jj] * x[indices[jj]]
            y[i] = acc
        return y

    @njit(cache=True)
    def pcg_numba(indptr, indices, data, inv_diag, b, x0, rel_tol, max_iter):
        n = b.shape[0]
        x = x0.copy()
        r = b - csr_matvec_numba(indptr, indices, data, x)
        hist = np.empty(max_iter + 1)
        hist[0] = np.sqrt(_dot(r, r))
        b_norm = np.sqrt(_dot(b, b))
        if b_norm == 0.0:
            return np.zeros(n), 0, hist[:1] * 0.0
        tol = rel_tol * b_norm
        if hist[0] <= tol:
            return x, 0, hist[:1]
        z = inv_diag * r
        p = z.copy()
        rz = _dot(r, z)
        k = 0
        while k < max_iter:
            Ap = csr_matvec_numba(indptr, indices, data, p)
            alpha = rz / _dot(p, Ap)
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * Ap[i]
            k += 1
            res = np.sqrt(_dot(r, r))
            if res <= tol:
                r = b - csr_matvec_numba(indptr, indices, data, x)
                res = np.sqrt(_dot(r, r))
                hist[k] = res
                if res <= tol:
                    break
            else:
                hist[k] = res
            rz_new = 0.0
            for i in range(n):
                z[i] = inv_diag[i] * r[i]
                rz_new += r[i] * z[i]
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]
        return x, k, hist[: k + 1].copy()

    @njit(cache=True)
    def psor_numba(A, b, psi, omega, tol, max_sweeps, u0):
        u = u0.copy()
        n = b.shape[0]
        sweeps = 0
        change = np.inf
        while sweeps < max_sweeps:
            change = 0.0
            for i in range(n):
                row_dot = 0.0
                for j in range(n):
                    row_dot += A[i, j] * u[j]
                u_gs = u[i] + (b[i] - row_dot) / A[i, i]
                u_new = u[i] + omega * (u_gs - u[i])
                if u_new > psi[i]:
                    u_new = psi[i]
                delta = abs(u_new - u[i])
                if delta > change:
                    change = delta
                u[i] = u_new
            sweeps += 1
            if change < tol:
                break
        return u, sweeps, change

    csr_matvec = csr_matvec_numba
    pcg = pcg_numba
    psor = psor_numba
else:
    csr_matvec = csr_matvec_numpy
    pcg = pcg_numpy
    psor = psor_numpy
