"""Independent verification paths for the primary solver.

Two deliberately different discretizations: the exact sine eigen-expansion
of the fractional operator on the unit interval/square, and a dense finite
difference operator raised to the power s through its eigendecomposition,
combined with projected SOR for the constrained problem.  Agreement with the
extension FEM is evidence, not tautology.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .assembly import assemble_base_mass
from .errors import OracleFailureError, ParameterError


@dataclass(frozen=True)
class SpectralBasis:
    """Sine eigenbasis of the Dirichlet Laplacian on (0,1)^dim."""

    dim: int
    k_max: int
    modes: np.ndarray        # (n_modes, dim) integer indices, sorted
    eigenvalues: np.ndarray  # (n_modes,) ascending


def make_spectral_basis(dim, k_max):
    if dim not in (1, 2):
        raise ParameterError("basis dimension must be 1 or 2")
    if k_max < 1:
        raise ParameterError("k_max must be >= 1")
    if dim == 1:
        modes = np.arange(1, k_max + 1).reshape(-1, 1)
        eig = np.pi ** 2 * modes[:, 0].astype(np.float64) ** 2
    else:
        k, l = np.meshgrid(np.arange(1, k_max + 1), np.arange(1, k_max + 1),
                           indexing="ij")
        modes = np.column_stack([k.ravel(), l.ravel()])
        eig = np.pi ** 2 * (modes[:, 0] ** 2 + modes[:, 1] ** 2).astype(np.float64)
    order = np.lexsort((modes[:, -1], modes[:, 0], eig))
    return SpectralBasis(dim=dim, k_max=int(k_max),
                         modes=modes[order], eigenvalues=eig[order])


def eigenfunction(modes, points):
    """Rows of normalized eigenfunctions evaluated at points (n_pts, dim)."""
    vals = np.ones((modes.shape[0], points.shape[0]))
    for d in range(modes.shape[1]):
        vals *= np.sqrt(2.0) * np.sin(
            np.outer(modes[:, d], np.pi * points[:, d])
        )
    return vals


def expand_coefficients(basis, f, n_quad=None):
    """L^2 projections of f onto the basis by tensor Gauss quadrature."""
    if n_quad is None:
        n_quad = max(64, 2 * basis.k_max + 16)
    x, w = np.polynomial.legendre.leggauss(n_quad)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if basis.dim == 1:
        pts = x.reshape(-1, 1)
        wts = w
    else:
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        pts = np.column_stack([X1.ravel(), X2.ravel()])
        wts = np.outer(w, w).ravel()
    fv = np.asarray(f(pts), dtype=np.float64)
    return eigenfunction(basis.modes, pts) @ (wts * fv)


def spectral_linear_solve(f, s, k_max, base):
    """Exact-expansion solution of the linear fractional problem at base nodes.

    f may be a callable on (n, dim) point arrays or a nodal field on the
    (structured) base mesh, in which case its P1 interpolant is expanded.
    """
    basis = make_spectral_basis(base.dim, k_max)
    if callable(f):
        coeff = expand_coefficients(basis, f)
    else:
        f_nodal = np.asarray(f, dtype=np.float64)
        if f_nodal.shape != (base.n_vertices,):
            raise ParameterError("nodal f must have one value per base vertex")
        interp = _nodal_interpolant(base, f_nodal)
        coeff = expand_coefficients(basis, interp)
    weights = basis.eigenvalues ** (-float(s)) * coeff
    return eigenfunction(basis.modes, base.vertices).T @ weights


def _nodal_interpolant(base, f_nodal):
    if base.structured_shape is None:
        raise ParameterError("nodal expansion needs a structured base mesh")
    if base.dim == 1:
        x_nodes = base.vertices[:, 0]

        def interp(p):
            return np.interp(p[:, 0], x_nodes, f_nodal)

        return interp
    nx, ny = base.structured_shape
    grid = f_nodal.reshape(ny, nx)
    x_nodes = np.unique(base.vertices[:, 0])
    y_nodes = np.unique(base.vertices[:, 1])
    from scipy.interpolate import RegularGridInterpolator

    rgi = RegularGridInterpolator((y_nodes, x_nodes), grid, method="linear")

    def interp(p):
        return rgi(np.column_stack([p[:, 1], p[:, 0]]))

    return interp


@dataclass(frozen=True)
class DenseFractionalOperator:
    """Dense s-th power of the finite difference Dirichlet Laplacian."""

    dim: int
    grid_m: int              # cells per axis; interior points (grid_m-1)^dim
    h: float
    s: float
    mat: np.ndarray          # V diag(w^s) V^T
    eigvecs: np.ndarray
    eigvals: np.ndarray      # of the unfractioned FD Laplacian

    def power(self, s):
        """Same eigenpairs raised to another exponent."""
        mat = (self.eigvecs * self.eigvals ** float(s)) @ self.eigvecs.T
        return DenseFractionalOperator(
            dim=self.dim, grid_m=self.grid_m, h=self.h, s=float(s),
            mat=mat, eigvecs=self.eigvecs, eigvals=self.eigvals,
        )


def make_dense_fractional(dim, grid_m, s):
    """FD Laplacian on a (grid_m+1)-node lattice, spectrally raised to s.

    Interior points are ordered like interior lattice vertices (row-major in
    the second coordinate), matching the base-mesh interior ordering.
    """
    if dim not in (1, 2):
        raise ParameterError("operator dimension must be 1 or 2")
    if grid_m < 2:
        raise ParameterError("need at least 2 cells per axis")
    n1 = grid_m - 1
    h = 1.0 / grid_m
    T = (np.diag(np.full(n1, 2.0)) - np.diag(np.ones(n1 - 1), 1)
         - np.diag(np.ones(n1 - 1), -1)) / (h * h)
    if dim == 1:
        L = T
    else:
        eye = np.eye(n1)
        L = np.kron(T, eye) + np.kron(eye, T)
    w, V = np.linalg.eigh(L)
    mat = (V * w ** float(s)) @ V.T
    return DenseFractionalOperator(dim=dim, grid_m=int(grid_m), h=h, s=float(s),
                                   mat=mat, eigvecs=V, eigvals=w)


def psor_vi_solve(op, b, psi, tol=1e-10, max_sweeps=100000, omega=1.5):
    """Projected SOR solve of the obstacle problem u <= psi, returns (u, mu).

    Sweeps until the successive-change sup norm drops below tol, then checks
    the KKT residuals (feasibility, multiplier sign on the active set,
    componentwise complementarity).
    """
    A = np.asarray(op.mat, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    if not np.all(np.isfinite(psi)):
        psi = np.where(np.isfinite(psi), psi, np.finfo(np.float64).max / 4.0)
    u0 = np.minimum(np.zeros_like(b), psi)
    u, sweeps, change = kernels.psor(A, b, psi, omega, tol, max_sweeps, u0)
    if change >= tol:
        raise OracleFailureError(
            "projected SOR stalled after %d sweeps (last change %.3e)"
            % (sweeps, change)
        )
    mu = b - A @ u
    _check_kkt(u, mu, psi, tol * 10.0 * (1.0 + np.abs(A).sum(axis=1).max()))
    return u, mu


def _check_kkt(u, mu, psi, tol):
    if np.max(u - psi) > tol:
        raise OracleFailureError("oracle iterate violates feasibility")
    active = u >= psi - tol
    if np.any(mu[active] < -tol):
        raise OracleFailureError("oracle multiplier negative on the active set")
    if np.max(np.abs(mu * (psi - u))) > tol * max(1.0, np.max(np.abs(psi - u))):
        raise OracleFailureError("oracle complementarity residual too large")


def compare_trace(fem_trace, oracle_trace, base):
    """Mass-weighted relative L2 and plain relative sup discrepancies."""
    fem = np.asarray(fem_trace, dtype=np.float64)
    ora = np.asarray(oracle_trace, dtype=np.float64)
    if fem.shape != ora.shape or fem.shape != (base.n_vertices,):
        raise ParameterError("trace fields must live on the same base lattice")
    M = assemble_base_mass(base)
    diff = fem - ora
    denom_l2 = float(ora @ (M @ ora))
    denom_inf = float(np.max(np.abs(ora)))
    rel_l2 = np.sqrt(float(diff @ (M @ diff)) / denom_l2) if denom_l2 > 0 else (
        0.0 if not np.any(diff) else np.inf
    )
    rel_inf = float(np.max(np.abs(diff))) / denom_inf if denom_inf > 0 else (
        0.0 if not np.any(diff) else np.inf
    )
    return rel_l2, rel_inf
