"""Preconditioned conjugate gradients for the assembled SPD operators."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError, SolverError


@dataclass(frozen=True)
class PcgConfig:
    rel_tol: float = 1e-10
    max_iter: int = 0           # 0 -> 10 * dimension
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ParameterError("rel_tol must lie in (0,1)")
        if self.max_iter < 0:
            raise ParameterError("max_iter must be nonnegative")
        if self.preconditioner not in ("jacobi", "none"):
            raise ParameterError(
                "preconditioner must be 'jacobi' or 'none', got %r"
                % (self.preconditioner,)
            )


def pcg_solve(op, b, cfg=None, x0=None):
    """Solve op @ x = b to a relative residual tolerance.

    Returns (x, iterations, final_residual); the final residual is the true
    (recomputed) one.  Raises SolverError with the residual history when the
    iteration cap is hit first.  ``x0`` warm-starts the iteration.
    """
    if cfg is None:
        cfg = PcgConfig()
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise ParameterError("right-hand side must be finite")
    max_iter = cfg.max_iter if cfg.max_iter > 0 else 10 * op.n
    if cfg.preconditioner == "jacobi":
        inv_diag = 1.0 / op.diagonal()
    else:
        inv_diag = np.ones(op.n)
    if x0 is None:
        x0 = np.zeros(op.n)
    x, iters, hist = kernels.pcg(
        op.indptr, op.indices, op.data, inv_diag, b, x0, cfg.rel_tol, max_iter
    )
    final = float(hist[-1]) if hist.size else 0.0
    b_norm = float(np.sqrt(np.sum(b * b)))
    if b_norm > 0.0 and final > cfg.rel_tol * b_norm:
        raise SolverError(
            "PCG did not converge in %d iterations (residual %.3e, target %.3e)"
            % (iters, final, cfg.rel_tol * b_norm),
            residual_history=hist,
        )
    return x, int(iters), final
