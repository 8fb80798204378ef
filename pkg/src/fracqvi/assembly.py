"""Assembly of the y^alpha-weighted extension form and trace operators.

Fields are plain float64 arrays: a *cylinder field* has one entry per
cylinder node (zero on Dirichlet nodes), a *nodal field* one entry per base
vertex.  Operators are assembled on free nodes only (Dirichlet rows and
columns eliminated); the singular weight is integrated exactly in the
extended direction through closed-form power moments, and with the standard
exact P1 formulas in the base direction.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse

from . import kernels
from .errors import ParameterError

_REF_GRADS_TRI = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class FractionalParams:
    """Fractional order s, weight exponent alpha = 1 - 2s, scaling d_s."""

    s: float
    alpha: float
    d_s: float

    @classmethod
    def from_order(cls, s):
        if not 0.0 < s < 1.0:
            raise ParameterError("fractional order s=%r must lie in (0,1)" % (s,))
        return cls(s=float(s), alpha=1.0 - 2.0 * float(s), d_s=normalization_ds(s))


def normalization_ds(s):
    """Dirichlet-to-Neumann scaling 2^(1-2s) * Gamma(1-s) / Gamma(s)."""
    if not 0.0 < s < 1.0:
        raise ParameterError("fractional order s=%r must lie in (0,1)" % (s,))
    return 2.0 ** (1.0 - 2.0 * s) * math.gamma(1.0 - s) / math.gamma(s)


def weighted_y_integral(a, b, alpha, coeffs):
    """Integral of y^alpha * p(y) over [a, b] by exact power moments.

    ``coeffs`` lists p's coefficients in ascending degree (degree <= 2 is all
    assembly needs, higher degrees work too).  Well defined down to a = 0
    because every exponent alpha + m + 1 is positive.
    """
    if a < 0.0:
        raise ParameterError("lower bound a=%r must be nonnegative" % (a,))
    if not b > a:
        raise ParameterError("need a < b, got a=%r b=%r" % (a, b))
    if not -1.0 < alpha < 1.0:
        raise ParameterError("weight exponent alpha=%r must lie in (-1,1)" % (alpha,))
    total = 0.0
    for m, c in enumerate(coeffs):
        e = alpha + m + 1.0
        total += c * (b ** e - a ** e) / e
    return total


def interval_matrices(a, b, alpha):
    """Weighted stiffness and mass 2x2 matrices of the P1 hats on [a, b]."""
    h = b - a
    mom0 = weighted_y_integral(a, b, alpha, (1.0,))
    Sy = (mom0 / (h * h)) * np.array([[1.0, -1.0], [-1.0, 1.0]])
    # hats: lam0 = (b-y)/h, lam1 = (y-a)/h
    m00 = weighted_y_integral(a, b, alpha, (b * b, -2.0 * b, 1.0)) / (h * h)
    m01 = weighted_y_integral(a, b, alpha, (-a * b, a + b, -1.0)) / (h * h)
    m11 = weighted_y_integral(a, b, alpha, (a * a, -2.0 * a, 1.0)) / (h * h)
    My = np.array([[m00, m01], [m01, m11]])
    return Sy, My


def simplex_p1_matrices(base, diffusion=None):
    """Per-element P1 stiffness (with coefficient A) and mass matrices.

    Returns (S, M) of shape (n_elements, k, k) with k = dim + 1.  The
    diffusion coefficient is one symmetric matrix per element (identity when
    None); exact integration since all integrands are polynomial.
    """
    verts = base.vertices[base.elements]
    n_el = base.n_elements
    if base.dim == 1:
        h = verts[:, 1, 0] - verts[:, 0, 0]
        a_coef = np.ones(n_el) if diffusion is None else diffusion.reshape(n_el)
        S = (a_coef / h)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
        M = (h / 6.0)[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]])
        return S, M

    d1 = verts[:, 1] - verts[:, 0]
    d2 = verts[:, 2] - verts[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    inv_jt = np.empty((n_el, 2, 2))
    inv_jt[:, 0, 0] = d2[:, 1]
    inv_jt[:, 0, 1] = -d1[:, 1]
    inv_jt[:, 1, 0] = -d2[:, 0]
    inv_jt[:, 1, 1] = d1[:, 0]
    inv_jt /= det[:, None, None]
    grads = np.einsum("eab,ib->eia", inv_jt, _REF_GRADS_TRI)
    if diffusion is None:
        S = area[:, None, None] * np.einsum("eia,eja->eij", grads, grads)
    else:
        S = area[:, None, None] * np.einsum(
            "eia,eab,ejb->eij", grads, diffusion, grads
        )
    M = (area / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))
    return S, M


@dataclass(frozen=True)
class SparseOperator:
    """Symmetric positive-definite operator in CSR storage on free nodes."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n: int
    diag_pos: np.ndarray  # position in data of each diagonal entry

    @classmethod
    def from_scipy(cls, A):
        A = A.tocsr()
        A.sum_duplicates()
        A.sort_indices()
        n = A.shape[0]
        rows = np.repeat(np.arange(n), np.diff(A.indptr))
        diag_pos = np.nonzero(A.indices == rows)[0]
        if diag_pos.shape[0] != n:
            raise ParameterError("operator is missing diagonal entries")
        return cls(
            indptr=A.indptr.astype(np.int64),
            indices=A.indices.astype(np.int64),
            data=A.data.astype(np.float64),
            n=n,
            diag_pos=diag_pos,
        )

    def matvec(self, x):
        return kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    def diagonal(self):
        return self.data[self.diag_pos]

    def with_diagonal_shift(self, rows, amounts):
        """Copy of the operator with ``amounts`` added at diagonal ``rows``."""
        data = self.data.copy()
        data[self.diag_pos[rows]] += amounts
        return replace(self, data=data)

    def to_scipy(self):
        return scipy.sparse.csr_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n, self.n)
        )

    def quadratic_form(self, x):
        # ufunc reduction instead of BLAS dot: these vectors are small
        # enough that threaded BLAS only adds synchronization cost
        return float(np.sum(x * self.matvec(x)))


@dataclass(frozen=True)
class ProblemData:
    """Per-element coefficients and the nonnegative trace load."""

    diffusion: np.ndarray  # (n_elements, dim, dim) or None for identity
    reaction: np.ndarray   # (n_elements,) nonnegative
    load: np.ndarray       # (n_base_vertices,) nonnegative nodal f

    @classmethod
    def make(cls, base, load, diffusion=None, reaction=None):
        load = np.asarray(load, dtype=np.float64)
        if load.shape != (base.n_vertices,):
            raise ParameterError(
                "load must have one value per base vertex (%d), got shape %r"
                % (base.n_vertices, load.shape)
            )
        scale = max(1.0, float(np.max(np.abs(load))) if load.size else 1.0)
        if np.min(load) < -1e-12 * scale:
            raise ParameterError("load must be nonnegative nodally")
        load = np.maximum(load, 0.0)
        if reaction is None:
            reaction = np.zeros(base.n_elements)
        else:
            reaction = np.asarray(reaction, dtype=np.float64)
            if reaction.shape == ():
                reaction = np.full(base.n_elements, float(reaction))
            if np.min(reaction) < 0.0:
                raise ParameterError("reaction coefficient must be nonnegative")
        if diffusion is not None:
            diffusion = np.asarray(diffusion, dtype=np.float64)
            if diffusion.shape == ():
                diffusion = float(diffusion) * np.tile(
                    np.eye(base.dim), (base.n_elements, 1, 1)
                )
            if diffusion.shape != (base.n_elements, base.dim, base.dim):
                raise ParameterError("diffusion must be one d x d matrix per element")
            if not np.allclose(diffusion, np.swapaxes(diffusion, 1, 2), atol=1e-12):
                raise ParameterError("diffusion matrices must be symmetric")
            eigs = np.linalg.eigvalsh(diffusion)
            if np.min(eigs) <= 0.0:
                raise ParameterError("diffusion matrices must be positive definite")
        return cls(diffusion=diffusion, reaction=reaction, load=load)


def _assemble_tensor(mesh, alpha, S_x, M_x, grad_scale, mass_coef):
    """Tensor assembly of grad_scale*(S_x (x) M_y + M_x (x) S_y) + c*(M_x (x) M_y).

    ``mass_coef`` is a per-base-element coefficient array, or None to drop
    the mass block.  Result lives on free nodes.
    """
    base = mesh.base
    nb = base.n_vertices
    npe = base.dim + 1
    elems = base.elements
    free_index = mesh.free_index
    n_free = mesh.n_free
    y = mesh.interval.nodes

    rows_all, cols_all, vals_all = [], [], []
    for k in range(mesh.interval.M):
        Sy, My = interval_matrices(y[k], y[k + 1], alpha)
        loc = grad_scale * (
            np.einsum("ab,eij->eaibj", My, S_x) + np.einsum("ab,eij->eaibj", Sy, M_x)
        )
        if mass_coef is not None:
            loc += np.einsum("e,ab,eij->eaibj", mass_coef, My, M_x)
        loc = loc.reshape(-1, 2 * npe, 2 * npe)
        gids = np.hstack([elems + k * nb, elems + (k + 1) * nb])
        f = free_index[gids]  # (n_el, 2*npe), -1 on Dirichlet nodes
        rows = np.broadcast_to(f[:, :, None], loc.shape)
        cols = np.broadcast_to(f[:, None, :], loc.shape)
        keep = (rows >= 0) & (cols >= 0)
        rows_all.append(rows[keep])
        cols_all.append(cols[keep])
        vals_all.append(loc[keep])

    A = scipy.sparse.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(n_free, n_free),
    )
    return SparseOperator.from_scipy(A)


def assemble_extension_operator(mesh, fp, data):
    """Stiffness of the weighted extension form on free nodes.

    Per tensor cell E x I_k the local block is
    (1/d_s) [S_x(E;A) (x) M_y + M_x(E) (x) S_y] + c_E M_x(E) (x) M_y
    with the y-matrices from exact weighted moments.
    """
    S_x, M_x = simplex_p1_matrices(mesh.base, data.diffusion)
    mass_coef = data.reaction if np.any(data.reaction != 0.0) else None
    return _assemble_tensor(mesh, fp.alpha, S_x, M_x, 1.0 / fp.d_s, mass_coef)


def assemble_weighted_h1_operator(mesh, fp):
    """Operator of the weighted H^1 norm: stiffness + mass, A = I, no 1/d_s."""
    S_x, M_x = simplex_p1_matrices(mesh.base, None)
    return _assemble_tensor(
        mesh, fp.alpha, S_x, M_x, 1.0, np.ones(mesh.base.n_elements)
    )


def assemble_base_mass(base):
    """Consistent P1 mass matrix over all base vertices (scipy CSR)."""
    _, M_x = simplex_p1_matrices(base, None)
    npe = base.dim + 1
    rows = np.repeat(base.elements, npe, axis=1).ravel()
    cols = np.tile(base.elements, (1, npe)).ravel()
    A = scipy.sparse.coo_matrix(
        (M_x.ravel(), (rows, cols)), shape=(base.n_vertices, base.n_vertices)
    ).tocsr()
    A.sum_duplicates()
    return A


def assemble_trace_load(base, f):
    """Load vector b_i = integral of (P1-interpolated) f against the hats."""
    f = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise ParameterError("load field must be finite")
    return assemble_base_mass(base) @ f


def assemble_trace_lumped_mass(base):
    """Row-sum lumping of the base mass matrix; entries are positive."""
    return np.asarray(assemble_base_mass(base).sum(axis=1)).ravel()


def weighted_h1_norm(mesh, fp, u, h1_op=None):
    """Discrete weighted H^1 norm sqrt(u^T (K~ + M~) u) of a cylinder field."""
    if h1_op is None:
        h1_op = assemble_weighted_h1_operator(mesh, fp)
    v = u[mesh.free_nodes]
    return math.sqrt(max(h1_op.quadratic_form(v), 0.0))


@dataclass(frozen=True)
class ExtensionSystem:
    """Assembled discrete problem: operator, norms and trace bookkeeping."""

    mesh: object
    params: FractionalParams
    data: ProblemData
    K: SparseOperator          # extension form on free nodes
    H: SparseOperator          # weighted H^1 norm operator on free nodes
    load: np.ndarray           # consistent trace load over base vertices
    lumped: np.ndarray         # lumped trace mass over base vertices

    @property
    def interior(self):
        return self.mesh.base.interior

    @property
    def n_trace_free(self):
        return self.mesh.n_trace_free

    def full_field(self, u_free):
        u = np.zeros(self.mesh.n_nodes)
        u[self.mesh.free_nodes] = u_free
        return u

    def free_part(self, u_full):
        return u_full[self.mesh.free_nodes]

    def trace(self, u_full):
        return u_full[: self.mesh.base.n_vertices]

    def h1_norm(self, u_full):
        v = u_full[self.mesh.free_nodes]
        return math.sqrt(max(self.H.quadratic_form(v), 0.0))


def build_system(mesh, fp, data):
    """Assemble every operator a solve needs, once per mesh."""
    return ExtensionSystem(
        mesh=mesh,
        params=fp,
        data=data,
        K=assemble_extension_operator(mesh, fp, data),
        H=assemble_weighted_h1_operator(mesh, fp),
        load=assemble_trace_load(mesh.base, data.load),
        lumped=assemble_trace_lumped_mass(mesh.base),
    )
