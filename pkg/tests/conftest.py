import numpy as np
import pytest

from fracqvi import (
    FractionalParams,
    ProblemData,
    build_base_mesh,
    build_cylinder,
    build_graded_interval,
    build_system,
    default_gamma,
)
from fracqvi.qvi import default_tau


def bump(p):
    out = p[:, 0] * (1.0 - p[:, 0])
    if p.shape[1] == 2:
        out = out * p[:, 1] * (1.0 - p[:, 1])
    return out


def make_system(s=0.5, m=12, layers=10, n=2, gamma=None, tau=None, f=bump):
    base = build_base_mesh(n, m)
    if tau is None:
        tau = default_tau(base)
    if gamma is None:
        gamma = default_gamma(s)
    interval = build_graded_interval(layers, gamma, tau, s)
    cyl = build_cylinder(base, interval)
    fp = FractionalParams.from_order(s)
    data = ProblemData.make(base, f(base.vertices))
    return build_system(cyl, fp, data)


@pytest.fixture(scope="session")
def small_system():
    """2-d bump-load system shared by solver tests (s = 1/2, 1210 dof)."""
    return make_system(s=0.5, m=12, layers=10)
