import math

import mpmath
import numpy as np
import pytest

from fracqvi import (
    FractionalParams,
    ParameterError,
    ProblemData,
    assemble_extension_operator,
    assemble_trace_load,
    assemble_trace_lumped_mass,
    assemble_weighted_h1_operator,
    build_base_mesh,
    build_cylinder,
    build_graded_interval,
    build_system,
    normalization_ds,
    pcg_solve,
    weighted_h1_norm,
    weighted_y_integral,
)
from fracqvi.assembly import interval_matrices, simplex_p1_matrices
from fracqvi.mesh import CylinderMesh

# frozen reference values from a 50-digit Gamma evaluation
DS_REFERENCE = {
    0.25: 0.47798879748612499536,
    0.75: 2.0920992401062032979,
}


def test_normalization_ds_half_is_one():
    assert normalization_ds(0.5) == 1.0


@pytest.mark.parametrize("s,ref", sorted(DS_REFERENCE.items()))
def test_normalization_ds_reference(s, ref):
    assert normalization_ds(s) == pytest.approx(ref, rel=1e-13)


def test_normalization_ds_against_gamma_oracle():
    mpmath.mp.dps = 50
    values = []
    for k in range(1, 10):
        s = k / 10
        ref = float(2 ** (1 - 2 * mpmath.mpf(k) / 10)
                    * mpmath.gamma(1 - mpmath.mpf(k) / 10)
                    / mpmath.gamma(mpmath.mpf(k) / 10))
        assert normalization_ds(s) == pytest.approx(ref, rel=1e-12)
        assert normalization_ds(s) > 0.0
        values.append(normalization_ds(s))
    assert all(b > a for a, b in zip(values, values[1:]))


def test_normalization_ds_range_guard():
    for bad in (0.0, 1.0, -0.2, 1.4):
        with pytest.raises(ParameterError):
            normalization_ds(bad)


def test_fractional_params():
    fp = FractionalParams.from_order(0.3)
    assert fp.alpha == 1.0 - 2.0 * 0.3
    assert fp.d_s == normalization_ds(0.3)
    assert FractionalParams.from_order(0.5).d_s == 1.0


def test_weighted_y_integral_power_rule():
    for alpha in (-0.6, 0.0, 0.8):
        for h in (0.3, 1.0, 2.5):
            expected = h ** (alpha + 1.0) / (alpha + 1.0)
            assert weighted_y_integral(0.0, h, alpha, (1.0,)) == pytest.approx(
                expected, rel=1e-14
            )


def test_weighted_y_integral_trivials():
    assert weighted_y_integral(0.0, 1.0, 0.0, (0.0, 1.0)) == pytest.approx(0.5)
    assert weighted_y_integral(0.25, 1.0, -0.5, (1.0,)) == pytest.approx(1.0)


def test_weighted_y_integral_domain_errors():
    with pytest.raises(ParameterError):
        weighted_y_integral(-0.1, 1.0, 0.0, (1.0,))
    with pytest.raises(ParameterError):
        weighted_y_integral(0.5, 0.5, 0.0, (1.0,))


def test_weighted_y_integral_against_quadrature():
    mpmath.mp.dps = 30
    rng = np.random.default_rng(3)
    for _ in range(12):
        a = float(rng.uniform(0.0, 0.5))
        b = a + float(rng.uniform(0.1, 2.0))
        alpha = float(rng.uniform(-0.9, 0.9))
        coeffs = rng.uniform(-2, 2, size=3)
        ref = mpmath.quad(
            lambda y: y ** alpha * (coeffs[0] + coeffs[1] * y + coeffs[2] * y * y),
            [a, b],
        )
        got = weighted_y_integral(a, b, alpha, tuple(coeffs))
        assert got == pytest.approx(float(ref), rel=1e-11, abs=1e-13)


def test_single_cell_q1_stiffness():
    # unit square as segment x interval, alpha = 0, s = 1/2: bilinear Laplacian
    Sy, My = interval_matrices(0.0, 1.0, 0.0)
    base = build_base_mesh(1, 1)
    Sx, Mx = simplex_p1_matrices(base)
    local = np.kron(My, Sx[0]) + np.kron(Sy, Mx[0])
    assert np.allclose(np.diag(local), 2.0 / 3.0)
    assert np.allclose(local, local.T)
    assert np.allclose(local.sum(axis=1), 0.0, atol=1e-14)
    q1 = np.array([
        [4.0, -1.0, -1.0, -2.0],
        [-1.0, 4.0, -2.0, -1.0],
        [-1.0, -2.0, 4.0, -1.0],
        [-2.0, -1.0, -1.0, 4.0],
    ]) / 6.0
    assert np.allclose(local, q1)


def _tiny_system(s=0.6, m=4, layers=3):
    base = build_base_mesh(2, m)
    gi = build_graded_interval(layers, 3.0 / (2 * s) + 0.4, 1.5, s)
    cyl = build_cylinder(base, gi)
    fp = FractionalParams.from_order(s)
    data = ProblemData.make(base, np.ones(base.n_vertices))
    return cyl, fp, data


def test_operator_symmetry():
    cyl, fp, data = _tiny_system()
    K = assemble_extension_operator(cyl, fp, data).to_scipy()
    diff = (K - K.T)
    assert abs(diff).max() <= 1e-12 * abs(K).max()


def test_operator_positive_definite():
    cyl, fp, data = _tiny_system()
    K = assemble_extension_operator(cyl, fp, data)
    rng = np.random.default_rng(5)
    for _ in range(5):
        v = rng.standard_normal(K.n)
        assert K.quadratic_form(v) > 0.0
    b = rng.standard_normal(K.n)
    x, iters, res = pcg_solve(K, b)
    assert res <= 1e-10 * np.linalg.norm(b)


def test_gradient_form_annihilates_constants():
    # all-free patch: gradient part of the form applied to 1 vanishes
    from fracqvi.assembly import _assemble_tensor

    base = build_base_mesh(2, 3)
    gi = build_graded_interval(3, 4.0, 1.0, 0.5)
    cyl = build_cylinder(base, gi)
    all_free = CylinderMesh(
        base=base,
        interval=gi,
        dirichlet_mask=np.zeros(cyl.n_nodes, dtype=bool),
        free_nodes=np.arange(cyl.n_nodes),
        free_index=np.arange(cyl.n_nodes),
    )
    Sx, Mx = simplex_p1_matrices(base)
    K = _assemble_tensor(all_free, 0.0, Sx, Mx, 1.0, None)
    ones = np.ones(K.n)
    assert abs(K.quadratic_form(ones)) <= 1e-12


def test_reaction_term_scales_with_coefficient():
    cyl, fp, data = _tiny_system()
    base = cyl.base
    data_c = ProblemData.make(base, data.load, reaction=2.0)
    K0 = assemble_extension_operator(cyl, fp, data).to_scipy()
    Kc = assemble_extension_operator(cyl, fp, data_c).to_scipy()
    # difference is exactly 2 * the weighted tensor mass, so it is SPD
    D = (Kc - K0).toarray()
    assert np.allclose(D, D.T)
    w = np.linalg.eigvalsh(D)
    assert w.min() > 0.0


def test_trace_load_uniform_1d():
    base = build_base_mesh(1, 8)
    b = assemble_trace_load(base, np.ones(base.n_vertices))
    h = 1.0 / 8
    assert np.allclose(b[1:-1], h)
    assert np.allclose(b[[0, -1]], h / 2.0)


def test_trace_load_zero():
    base = build_base_mesh(2, 3)
    assert np.all(assemble_trace_load(base, np.zeros(base.n_vertices)) == 0.0)


def test_trace_load_2d_interior_value():
    # hand-assembled 3x3 lattice: interior hat integrates to 1/4
    base = build_base_mesh(2, 2)
    b = assemble_trace_load(base, np.ones(base.n_vertices))
    assert b[base.interior[0]] == pytest.approx(0.25, rel=1e-14)


def test_lumped_mass_values():
    base = build_base_mesh(1, 8)
    lm = assemble_trace_lumped_mass(base)
    assert np.allclose(lm[1:-1], 1.0 / 8)
    assert lm.sum() == pytest.approx(1.0, rel=1e-14)
    base2 = build_base_mesh(2, 2)
    lm2 = assemble_trace_lumped_mass(base2)
    assert lm2[base2.interior[0]] == pytest.approx(0.25, rel=1e-14)
    assert lm2.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(lm2 > 0.0)


def test_weighted_h1_norm_basics(small_system):
    sys = small_system
    mesh, fp = sys.mesh, sys.params
    zero = np.zeros(mesh.n_nodes)
    assert weighted_h1_norm(mesh, fp, zero, h1_op=sys.H) == 0.0
    rng = np.random.default_rng(11)
    u = np.zeros(mesh.n_nodes)
    u[mesh.free_nodes] = rng.standard_normal(mesh.n_free)
    n1 = weighted_h1_norm(mesh, fp, u, h1_op=sys.H)
    n2 = weighted_h1_norm(mesh, fp, 2.0 * u, h1_op=sys.H)
    assert n2 == pytest.approx(2.0 * n1, rel=1e-12)


def test_weighted_h1_norm_single_free_node():
    # one free node: n=1 base with one interior vertex, one layer
    s = 0.75
    alpha = 1.0 - 2 * s
    tau = 0.7
    base = build_base_mesh(1, 2)
    gi = build_graded_interval(1, 2.2, tau, s)
    cyl = build_cylinder(base, gi)
    fp = FractionalParams.from_order(s)
    assert cyl.n_free == 1
    u = np.zeros(cyl.n_nodes)
    u[cyl.free_nodes[0]] = 1.0
    got = weighted_h1_norm(cyl, fp, u)
    # independent 2-d quadrature of the hat (x tent) * (linear y decay)
    mpmath.mp.dps = 25
    lam = lambda x: 1.0 - abs(x - 0.5) / 0.5
    dlam = lambda x: -2.0 if x > 0.5 else 2.0
    eta = lambda y: (tau - y) / tau
    integrand = lambda x, y: y ** alpha * (
        dlam(x) ** 2 * eta(y) ** 2
        + lam(x) ** 2 * (1.0 / tau) ** 2
        + lam(x) ** 2 * eta(y) ** 2
    )
    ref = mpmath.quad(integrand, [0.0, 0.5, 1.0], [0.0, tau])
    assert got == pytest.approx(math.sqrt(float(ref)), rel=1e-9)


def test_tensor_assembly_matches_direct_quadrature():
    # 2-cell mesh: tensorized local blocks vs independent weighted quadrature
    mpmath.mp.dps = 30
    s = 0.35
    alpha = 1.0 - 2 * s
    base = build_base_mesh(1, 2)
    gi = build_graded_interval(2, 3.0 / (2 * s) + 0.3, 1.3, s)
    Sx, Mx = simplex_p1_matrices(base)
    for k in range(2):
        a, b = gi.nodes[k], gi.nodes[k + 1]
        Sy, My = interval_matrices(a, b, alpha)
        h = b - a
        hats = [lambda y, a=a, b=b, h=h: (b - y) / h,
                lambda y, a=a, b=b, h=h: (y - a) / h]
        dhats = [-1.0 / h, 1.0 / h]
        for p in range(2):
            for q in range(2):
                m_ref = mpmath.quad(
                    lambda y: y ** alpha * hats[p](y) * hats[q](y), [a, b]
                )
                s_ref = mpmath.quad(
                    lambda y: y ** alpha * dhats[p] * dhats[q], [a, b]
                )
                assert My[p, q] == pytest.approx(float(m_ref), rel=1e-10, abs=1e-14)
                assert Sy[p, q] == pytest.approx(float(s_ref), rel=1e-10, abs=1e-14)
    # x-direction exact P1 pieces on [0, 1/2]
    assert Sx[0, 0, 0] == pytest.approx(2.0)
    assert Mx[0, 0, 0] == pytest.approx(0.5 / 3.0)


def test_problem_data_validation():
    base = build_base_mesh(2, 3)
    with pytest.raises(ParameterError):
        ProblemData.make(base, -np.ones(base.n_vertices))
    with pytest.raises(ParameterError):
        ProblemData.make(base, np.ones(base.n_vertices), reaction=-1.0)
    bad_diff = np.tile(np.array([[1.0, 0.5], [0.2, 1.0]]), (base.n_elements, 1, 1))
    with pytest.raises(ParameterError):
        ProblemData.make(base, np.ones(base.n_vertices), diffusion=bad_diff)
    with pytest.raises(ParameterError):
        ProblemData.make(base, np.ones(4))


def test_build_system_consistency(small_system):
    sys = small_system
    assert sys.K.n == sys.mesh.n_free
    assert sys.H.n == sys.mesh.n_free
    assert sys.load.shape == (sys.mesh.base.n_vertices,)
    assert np.all(sys.lumped > 0.0)
    # trace slots come first in the free numbering
    nt = sys.n_trace_free
    assert np.array_equal(sys.mesh.free_nodes[:nt], sys.interior)
