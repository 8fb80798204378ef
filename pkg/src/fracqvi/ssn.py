"""Regularized semismooth Newton solver for the inner obstacle problem.

For a fixed obstacle the variational inequality is replaced by a penalized
equation with penalty strength theta: at each Newton step the active set is
frozen, a linear extension problem with a diagonal trace penalty is solved,
and the multiplier is updated from the penalized residual.  theta is driven
from theta0 to theta_max by a geometric continuation, warm-starting each
level from the previous solution.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailureError, ParameterError
from .linalg import PcgConfig, pcg_solve


@dataclass(frozen=True)
class SSNConfig:
    mu_bar: float = 0.0
    theta0: float = 10.0
    theta_ratio: float = 1.5
    theta_max: float = 1e10
    eps2: float = 1e-2
    k_max: int = 10
    pcg: PcgConfig = field(default_factory=PcgConfig)

    def __post_init__(self):
        if not self.theta0 > 0.0:
            raise ParameterError("theta0 must be positive")
        if not self.theta_ratio > 1.0:
            raise ParameterError("theta_ratio must exceed 1")
        if not self.theta_max >= self.theta0:
            raise ParameterError("theta_max must be >= theta0")
        if not 0.0 < self.eps2 < 1.0:
            raise ParameterError("eps2 must lie in (0,1)")
        if self.k_max < 1:
            raise ParameterError("k_max must be >= 1")

    def theta_levels(self):
        levels = []
        t = self.theta0
        while t < self.theta_max:
            levels.append(t)
            t *= self.theta_ratio
        levels.append(self.theta_max)
        return levels


@dataclass(frozen=True)
class VISolution:
    u: np.ndarray             # cylinder field
    mu: np.ndarray            # multiplier on trace nodes
    active: np.ndarray        # bool per trace node
    newton_iters: int
    theta_final: float
    log: list                 # rows (theta, k, active_count, residual)


def active_set(u, psi, mu_bar, theta):
    """Trace nodes where the penalized multiplier predicate is positive.

    Strict inequality: ties count as inactive.
    """
    if not theta > 0.0:
        raise ParameterError("theta must be positive")
    tr = u[: psi.shape[0]]
    return mu_bar + theta * (tr - psi) > 0.0


def ssn_newton_step(system, b_trace, psi, active, theta, mu_bar,
                    x0=None, pcg_cfg=None):
    """One Newton step with frozen active set.

    Solves [K + theta D_A] u = b + theta D_A psi - mu_bar d_A on free nodes,
    with D_A the lumped trace mass restricted to the active set.  Returns
    (cylinder field, pcg iterations, pcg residual).

    The solve runs in increment form around x0: at large theta the penalty
    inflates ||rhs|| by many orders, and a tolerance relative to it would
    leave O(rel_tol * theta) errors in the unpenalized components.  The
    residual of x0 is penalty-free once iterates are nearly feasible, so
    anchoring the tolerance to it keeps the correction accurate uniformly
    in theta.
    """
    interior = system.interior
    n_tf = system.n_trace_free
    act = active[interior]
    d = system.lumped[interior]

    rhs = np.zeros(system.K.n)
    rhs[:n_tf] = b_trace[interior]
    rhs[:n_tf][act] += theta * d[act] * psi[interior][act] - mu_bar * d[act]

    rows = np.nonzero(act)[0]  # free ids of active trace dofs (layer 0 first)
    op = system.K.with_diagonal_shift(rows, theta * d[act])
    if x0 is None:
        x0 = np.zeros(op.n)
    r0 = rhs - op.matvec(x0)
    e, iters, res = pcg_solve(op, r0, pcg_cfg)
    return system.full_field(x0 + e), iters, res


def multiplier(u, psi, active, mu_bar, theta):
    """Complementarity multiplier: zero on inactive nodes."""
    mu = np.zeros(psi.shape[0])
    tr = u[: psi.shape[0]]
    mu[active] = mu_bar + theta * (tr[active] - psi[active])
    return mu


def ssn_solve(system, b_trace, psi, u_init, cfg=None, level_cache=None):
    """Solve the fixed-obstacle inequality by penalization + continuation.

    Per theta level the Newton loop stops on active-set repetition, on the
    increment ratio dropping below eps2 (needs two prior increments), or at
    k_max steps.  Returns the final-theta solution with its multiplier.

    ``level_cache`` (dict, mutated in place) keeps each level's converged
    free vector; on repeated calls with a slowly varying obstacle it seeds
    the inner linear solves, which changes only their cost, not their
    accuracy.
    """
    if cfg is None:
        cfg = SSNConfig()
    psi = np.asarray(psi, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(psi))))
    if np.min(psi) < -1e-12 * scale:
        raise ParameterError("obstacle must be nonnegative nodally")

    u = u_init.copy()
    total_iters = 0
    log = []
    theta = cfg.theta0
    act = np.zeros(psi.shape[0], dtype=bool)
    for level, theta in enumerate(cfg.theta_levels()):
        act = active_set(u, psi, cfg.mu_bar, theta)
        increments = []
        x_seed = None
        if level_cache is not None:
            x_seed = level_cache.get(level)
        for k in range(1, cfg.k_max + 1):
            x0 = x_seed if (k == 1 and x_seed is not None) else system.free_part(u)
            u_new, _, _ = ssn_newton_step(
                system, b_trace, psi, act, theta, cfg.mu_bar,
                x0=x0, pcg_cfg=cfg.pcg,
            )
            if not np.all(np.isfinite(u_new)):
                raise NumericalFailureError(
                    "non-finite iterate at theta=%.3e, k=%d" % (theta, k)
                )
            total_iters += 1
            act_new = active_set(u_new, psi, cfg.mu_bar, theta)
            increments.append(system.h1_norm(u_new - u))
            log.append((theta, k, int(np.count_nonzero(act_new)), increments[-1]))
            u = u_new
            if np.array_equal(act_new, act):
                act = act_new
                break
            act = act_new
            if (
                len(increments) >= 2
                and increments[-2] > 0.0
                and increments[-1] / increments[-2] < cfg.eps2
            ):
                break
        if level_cache is not None:
            level_cache[level] = system.free_part(u)

    mu = multiplier(u, psi, act, cfg.mu_bar, theta)
    return VISolution(
        u=u, mu=mu, active=act, newton_iters=total_iters,
        theta_final=theta, log=log,
    )


def solve_unconstrained(system, pcg_cfg=None, x0=None):
    """Extension solve without obstacle (the comparison bound's upper field)."""
    rhs = np.zeros(system.K.n)
    rhs[: system.n_trace_free] = system.load[system.interior]
    x, _, _ = pcg_solve(system.K, rhs, pcg_cfg, x0=x0)
    return system.full_field(x)
