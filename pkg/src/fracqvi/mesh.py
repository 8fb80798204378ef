"""Structured meshes: base triangulation, graded interval, tensor cylinder.

The computational domain is the truncated cylinder (0,1)^n x (0, tau).  Its
mesh is the tensor product of a structured triangulation of the unit
interval/square with an interval mesh graded toward y = 0, where the
degenerate weight concentrates the solution's variation.

Node numbering on the cylinder is layer-major: node(b, l) = l * n_base + b,
so the trace plane y = 0 occupies the first n_base node ids.  Homogeneous
Dirichlet conditions live on the lateral boundary and on the top lid.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GradingViolationError, ParameterError


@dataclass(frozen=True)
class BaseMesh:
    """Conforming structured triangulation of (0,1)^dim, dim in {1, 2}."""

    dim: int
    vertices: np.ndarray        # (n_vertices, dim)
    elements: np.ndarray        # (n_elements, dim+1) vertex indices
    boundary_mask: np.ndarray   # (n_vertices,) bool
    structured_shape: tuple     # nodes per axis

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def interior(self):
        """Indices of interior vertices, ascending."""
        return np.nonzero(~self.boundary_mask)[0]


@dataclass(frozen=True)
class GradedInterval:
    """Graded mesh of [0, tau]: y_k = (k/M)^gamma * tau."""

    M: int
    gamma: float
    tau: float
    nodes: np.ndarray

    @property
    def cells(self):
        """(M, 2) array of cell endpoints [y_k, y_{k+1}]."""
        return np.column_stack([self.nodes[:-1], self.nodes[1:]])


@dataclass(frozen=True)
class CylinderMesh:
    """Tensor-product mesh of the truncated cylinder with node classification."""

    base: BaseMesh
    interval: GradedInterval
    dirichlet_mask: np.ndarray  # (n_nodes,) bool
    free_nodes: np.ndarray      # ascending node ids
    free_index: np.ndarray      # (n_nodes,), -1 on Dirichlet nodes

    @property
    def n_nodes(self):
        return self.base.n_vertices * (self.interval.M + 1)

    @property
    def n_free(self):
        return self.free_nodes.shape[0]

    @property
    def trace_nodes(self):
        """Node ids on the trace plane y = 0 (layer 0)."""
        return np.arange(self.base.n_vertices)

    @property
    def n_trace_free(self):
        """Number of free trace nodes (= interior base vertices)."""
        return int(np.count_nonzero(~self.base.boundary_mask))

    def node_id(self, b, layer):
        return layer * self.base.n_vertices + b

    def node_coordinates(self):
        """(n_nodes, dim+1) coordinates, extended direction last."""
        nb = self.base.n_vertices
        y = np.repeat(self.interval.nodes, nb)
        xy = np.tile(self.base.vertices, (self.interval.M + 1, 1))
        return np.column_stack([xy, y])

    def tensor_cells(self):
        """Connectivity of the prism/quad tensor cells, one row per E x I_k.

        Column order: base element vertices at layer k, then at layer k+1.
        """
        nb = self.base.n_vertices
        elems = self.base.elements
        cells = []
        for k in range(self.interval.M):
            cells.append(np.hstack([elems + k * nb, elems + (k + 1) * nb]))
        return np.vstack(cells)


def gamma_floor(s):
    """Lower admissibility bound 3/(2s) for the grading exponent."""
    if not 0.0 < s < 1.0:
        raise ParameterError("fractional order s=%r must lie in (0,1)" % (s,))
    return 3.0 / (2.0 * s)


def default_gamma(s):
    """Grading exponent used when none is supplied: the floor plus 0.1."""
    return gamma_floor(s) + 0.1


def build_base_mesh(n, m):
    """Structured mesh of (0,1)^n with m cells per axis.

    For n=2 every lattice cell is split into two triangles by the
    lower-left-to-upper-right diagonal (deterministic orientation).
    """
    if n not in (1, 2):
        raise ParameterError("base dimension must be 1 or 2, got %r" % (n,))
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ParameterError("cells per axis must be a positive integer, got %r" % (m,))
    if n == 1:
        vertices = (np.arange(m + 1) / m).reshape(-1, 1)
        elements = np.column_stack([np.arange(m), np.arange(1, m + 1)])
        boundary = np.zeros(m + 1, dtype=bool)
        boundary[0] = boundary[m] = True
        return BaseMesh(1, vertices, elements.astype(np.int64), boundary, (m + 1,))

    coords = np.arange(m + 1) / m
    X, Y = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])  # id = iy*(m+1) + ix
    ix = np.arange(m)
    iy = np.arange(m)
    IX, IY = np.meshgrid(ix, iy, indexing="xy")
    v00 = (IY * (m + 1) + IX).ravel()
    v10 = v00 + 1
    v01 = v00 + (m + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.vstack([lower, upper]).astype(np.int64)
    boundary = (
        (vertices[:, 0] == 0.0)
        | (vertices[:, 0] == 1.0)
        | (vertices[:, 1] == 0.0)
        | (vertices[:, 1] == 1.0)
    )
    return BaseMesh(2, vertices, elements, boundary, (m + 1, m + 1))


def build_graded_interval(M, gamma, tau, s):
    """Graded interval mesh with nodes y_k = (k/M)^gamma * tau.

    The nodes are produced by that exact floating-point expression so they
    reproduce bit-for-bit.  gamma must exceed gamma_floor(s).
    """
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise ParameterError("layer count M must be a positive integer, got %r" % (M,))
    if not tau > 0.0:
        raise ParameterError("truncation height tau must be positive, got %r" % (tau,))
    floor = gamma_floor(s)
    if not gamma > floor:
        raise GradingViolationError(gamma, floor)
    nodes = np.array([(k / M) ** gamma * tau for k in range(M + 1)])
    return GradedInterval(int(M), float(gamma), float(tau), nodes)


def build_cylinder(base, interval):
    """Tensor-product cylinder mesh with Dirichlet/free classification.

    Dirichlet nodes are those over boundary base vertices (lateral wall) and
    every node of the top layer (the lid at y = tau).
    """
    nb = base.n_vertices
    M = interval.M
    n_nodes = nb * (M + 1)
    dirichlet = np.tile(base.boundary_mask, M + 1)
    dirichlet[M * nb:] = True
    free_nodes = np.nonzero(~dirichlet)[0]
    free_index = np.full(n_nodes, -1, dtype=np.int64)
    free_index[free_nodes] = np.arange(free_nodes.shape[0])
    return CylinderMesh(base, interval, dirichlet, free_nodes, free_index)
