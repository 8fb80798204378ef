"""Outer fixed-point iteration over the obstacle map, and the tau study.

Starting from zero, each sweep evaluates the obstacle map on the current
trace and solves the resulting fixed-obstacle inequality; the iterates
increase monotonically toward the quasi-variational solution.  Relative
change is measured in the discrete weighted H^1 norm.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import build_system, weighted_h1_norm, assemble_weighted_h1_operator
from .errors import ParameterError, SolverError, UnsupportedConfigurationError
from .ssn import SSNConfig, ssn_solve

_DEFAULT_SCALES = {"example1": 5.0, "example2": 2.0, "example4": 1.45}
OBSTACLE_KINDS = ("constant", "example1", "example2", "example3_impulse", "example4")


@dataclass(frozen=True)
class ObstacleMapSpec:
    """Named nonlocal map from trace fields to obstacle fields."""

    kind: str
    scale: float = 0.0          # multiplier of example1/2/4 maps
    delta: float = 1e-10        # floor added by examples 1, 2 and 4
    nu: float = 5e-3            # floor of the impulse map
    value: float = 0.0          # level of the constant map

    @classmethod
    def make(cls, kind, scale=None, delta=1e-10, nu=5e-3, value=None):
        if kind not in OBSTACLE_KINDS:
            raise ParameterError("unknown obstacle kind %r" % (kind,))
        if kind == "constant":
            if value is None:
                raise ParameterError("constant obstacle needs a value")
            if value < 0.0:
                raise ParameterError("constant obstacle must be nonnegative")
        if scale is None:
            scale = _DEFAULT_SCALES.get(kind, 0.0)
        return cls(kind=kind, scale=float(scale), delta=float(delta),
                   nu=float(nu), value=float(value if value is not None else 0.0))


def quadrant_min(values):
    """Suffix minimum over the upper-right index quadrant of a 2-d lattice."""
    m = np.minimum.accumulate(values[:, ::-1], axis=1)[:, ::-1]
    return np.minimum.accumulate(m[::-1, :], axis=0)[::-1, :]


def eval_obstacle(spec, trace_u, base):
    """Evaluate the obstacle map on a nonnegative trace field.

    Tiny negative entries (iteration round-off) are clipped; genuinely
    negative fields violate the monotone structure and raise.
    """
    u = np.asarray(trace_u, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(u))) if u.size else 1.0)
    if np.min(u) < -1e-10 * scale:
        raise ParameterError("obstacle maps require a nonnegative trace field")
    u = np.maximum(u, 0.0)

    if spec.kind == "constant":
        return np.full(base.n_vertices, spec.value)
    if spec.kind == "example1":
        x1 = base.vertices[:, 0]
        return spec.scale * np.maximum(0.0, np.sin(x1) * u) + spec.delta
    if spec.kind in ("example2", "example4"):
        from .assembly import assemble_trace_lumped_mass

        integral = float(assemble_trace_lumped_mass(base) @ u)
        return np.full(base.n_vertices, spec.scale * abs(integral) + spec.delta)
    if spec.kind == "example3_impulse":
        if base.structured_shape is None:
            raise UnsupportedConfigurationError(
                "impulse obstacle needs a structured lattice base mesh"
            )
        if base.dim == 1:
            suffix = np.minimum.accumulate(u[::-1])[::-1]
            return spec.nu + suffix
        shape = base.structured_shape  # (nx, ny) nodes; vertex id = iy*nx + ix
        grid = u.reshape(shape[1], shape[0])
        return spec.nu + quadrant_min(grid).ravel()
    raise ParameterError("unknown obstacle kind %r" % (spec.kind,))


@dataclass(frozen=True)
class QVIConfig:
    eps1: float = 5e-4
    n_max: int = 150
    tau_rule: str = "fixed"     # informational; the mesh realizes tau
    ssn: SSNConfig = field(default_factory=SSNConfig)

    def __post_init__(self):
        if not 0.0 < self.eps1 < 1.0:
            raise ParameterError("eps1 must lie in (0,1)")
        if self.n_max < 1:
            raise ParameterError("n_max must be >= 1")


@dataclass(frozen=True)
class QVIResult:
    u: np.ndarray
    trace: np.ndarray
    psi_final: np.ndarray
    active: np.ndarray      # final active flags per trace node
    outer_iters: int
    history: list           # rows (rel_change, ssn_iters, active_count)
    converged: bool
    min_increments: list        # per-step min of u_{n+1} - u_n, cylinder nodes
    trace_min_increments: list  # per-step min of the trace increment
    ssn_logs: list              # rows (outer_n, theta, k, active_count, residual)


def solve_qvi(data, spec, mesh, fp, cfg=None, system=None):
    """Fixed-point iteration u_{n+1} = S(psi(u_n)) from u_0 = 0.

    Stops when the weighted-H^1 relative change drops below eps1 or after
    n_max sweeps; tau stays fixed throughout.
    """
    if cfg is None:
        cfg = QVIConfig()
    if system is None:
        system = build_system(mesh, fp, data)

    u = np.zeros(mesh.n_nodes)
    history = []
    min_increments = []
    trace_min_increments = []
    ssn_logs = []
    converged = False
    psi = eval_obstacle(spec, system.trace(u), mesh.base)
    active = np.zeros(mesh.base.n_vertices, dtype=bool)
    level_cache = {}
    n = 0
    while n < cfg.n_max:
        psi = eval_obstacle(spec, system.trace(u), mesh.base)
        try:
            sol = ssn_solve(system, system.load, psi, u, cfg.ssn,
                            level_cache=level_cache)
        except SolverError as err:
            raise SolverError(
                "inner solve failed at outer iteration %d: %s" % (n + 1, err),
                residual_history=err.residual_history,
            ) from err
        n += 1
        u_new = sol.u
        diff_norm = system.h1_norm(u_new - u)
        new_norm = system.h1_norm(u_new)
        rel = diff_norm / new_norm if new_norm > 0.0 else 0.0
        history.append((rel, sol.newton_iters, int(np.count_nonzero(sol.active))))
        min_increments.append(float(np.min(u_new - u)))
        nb = mesh.base.n_vertices
        trace_min_increments.append(float(np.min(u_new[:nb] - u[:nb])))
        ssn_logs.extend((n,) + row for row in sol.log)
        u = u_new
        active = sol.active
        if rel < cfg.eps1:
            converged = True
            break

    return QVIResult(
        u=u,
        trace=system.trace(u),
        psi_final=psi,
        active=active,
        outer_iters=n,
        history=history,
        converged=converged,
        min_increments=min_increments,
        trace_min_increments=trace_min_increments,
        ssn_logs=ssn_logs,
    )


def default_tau(base):
    """Truncation height 1 + log(#elements)/3 (natural logarithm)."""
    if base.n_elements < 1:
        raise ParameterError("base mesh has no elements")
    return 1.0 + math.log(base.n_elements) / 3.0


def interpolate_layers(u, mesh_from, mesh_to):
    """Re-sample a cylinder field onto another cylinder over the same base.

    Linear interpolation along the extended direction per vertical node
    line; zero above the source truncation height (zero extension).
    """
    if mesh_from.base.n_vertices != mesh_to.base.n_vertices:
        raise ParameterError("cylinder meshes must share their base")
    nb = mesh_from.base.n_vertices
    U = u.reshape(mesh_from.interval.M + 1, nb)
    y_from = mesh_from.interval.nodes
    y_to = mesh_to.interval.nodes
    out = np.zeros((mesh_to.interval.M + 1, nb))
    inside = y_to <= y_from[-1]
    idx = np.clip(np.searchsorted(y_from, y_to[inside], side="right"), 1, len(y_from) - 1)
    y0 = y_from[idx - 1]
    y1 = y_from[idx]
    w = (y_to[inside] - y0) / (y1 - y0)
    out[inside] = (1.0 - w)[:, None] * U[idx - 1] + w[:, None] * U[idx]
    return out.ravel()


@dataclass(frozen=True)
class TruncationRow:
    tau: float
    probe_values: tuple
    h1_norm: float
    outer_iters: int
    converged: bool


@dataclass(frozen=True)
class TruncationStudy:
    rows: list
    solutions: list   # (tau, mesh, u) triples
    h1_diffs: list    # ||u_{tau_{i+1}} - u_{tau_i}||_H on the taller mesh


def truncation_study(data, spec, fp, tau_list, mesh_builder, cfg=None,
                     probe_points=None):
    """Solve the problem over an increasing list of truncation heights.

    ``mesh_builder`` maps tau to a cylinder mesh over one fixed base with a
    matched per-unit layer density.  Consecutive solutions are compared in
    the weighted H^1 norm after zero-extension onto the taller cylinder.
    """
    tau_list = list(tau_list)
    if any(b <= a for a, b in zip(tau_list, tau_list[1:])):
        raise ParameterError("tau list must be strictly increasing")
    rows = []
    solutions = []
    for tau in tau_list:
        cyl = mesh_builder(tau)
        res = solve_qvi(data, spec, cyl, fp, cfg)
        if probe_points is None:
            probes = (_center_value(cyl.base, res.trace),)
        else:
            probes = tuple(
                _probe_value(cyl.base, res.trace, p) for p in probe_points
            )
        rows.append(TruncationRow(
            tau=tau,
            probe_values=probes,
            h1_norm=weighted_h1_norm(cyl, fp, res.u),
            outer_iters=res.outer_iters,
            converged=res.converged,
        ))
        solutions.append((tau, cyl, res.u))

    h1_diffs = []
    for (_, mesh_a, u_a), (_, mesh_b, u_b) in zip(solutions, solutions[1:]):
        h1 = assemble_weighted_h1_operator(mesh_b, fp)
        diff = u_b - interpolate_layers(u_a, mesh_a, mesh_b)
        h1_diffs.append(weighted_h1_norm(mesh_b, fp, diff, h1_op=h1))
    return TruncationStudy(rows=rows, solutions=solutions, h1_diffs=h1_diffs)


def _center_value(base, trace):
    return _probe_value(base, trace, np.full(base.dim, 0.5))


def _probe_value(base, trace, point):
    d = np.linalg.norm(base.vertices - np.asarray(point), axis=1)
    return float(trace[np.argmin(d)])
