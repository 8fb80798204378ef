"""Fractional elliptic quasi-variational inequality solver.

Solves obstacle problems driven by spectral fractional diffusion through
the weighted extension on a truncated cylinder: tensor-product graded
meshes, a regularized semismooth Newton inner solver, a monotone
fixed-point outer iteration over the obstacle map, and independent
spectral / dense projected-SOR oracles for verification.
"""

from .assembly import (
    ExtensionSystem,
    FractionalParams,
    ProblemData,
    SparseOperator,
    assemble_extension_operator,
    assemble_trace_load,
    assemble_trace_lumped_mass,
    assemble_weighted_h1_operator,
    build_system,
    normalization_ds,
    weighted_h1_norm,
    weighted_y_integral,
)
from .errors import (
    GradingViolationError,
    NumericalFailureError,
    OracleFailureError,
    ParameterError,
    SolverError,
    UnsupportedConfigurationError,
)
from .linalg import PcgConfig, pcg_solve
from .mesh import (
    BaseMesh,
    CylinderMesh,
    GradedInterval,
    build_base_mesh,
    build_cylinder,
    build_graded_interval,
    default_gamma,
    gamma_floor,
)
from .oracle import (
    DenseFractionalOperator,
    SpectralBasis,
    compare_trace,
    make_dense_fractional,
    make_spectral_basis,
    psor_vi_solve,
    spectral_linear_solve,
)
from .qvi import (
    ObstacleMapSpec,
    QVIConfig,
    QVIResult,
    default_tau,
    eval_obstacle,
    solve_qvi,
    truncation_study,
)
from .ssn import (
    SSNConfig,
    VISolution,
    active_set,
    solve_unconstrained,
    ssn_newton_step,
    ssn_solve,
)

__version__ = "0.1.0"
