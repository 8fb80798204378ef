import numpy as np
import pytest

from fracqvi import (
    GradingViolationError,
    ParameterError,
    build_base_mesh,
    build_cylinder,
    build_graded_interval,
    gamma_floor,
)


def test_base_mesh_1d_counts():
    base = build_base_mesh(1, 4)
    assert base.n_vertices == 5
    assert base.n_elements == 4
    assert np.allclose(base.vertices[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    assert list(np.nonzero(base.boundary_mask)[0]) == [0, 4]


def test_base_mesh_2d_small():
    base = build_base_mesh(2, 2)
    assert base.n_vertices == 9
    assert base.n_elements == 8
    interior = base.interior
    assert interior.shape == (1,)
    assert np.allclose(base.vertices[interior[0]], [0.5, 0.5])


def test_base_mesh_2d_counts():
    base = build_base_mesh(2, 32)
    assert base.n_elements == 2 * 32 ** 2 == 2048
    assert base.n_vertices == 33 ** 2 == 1089


def test_base_mesh_boundary_exactness():
    base = build_base_mesh(2, 5)
    on_bdry = (
        (base.vertices[:, 0] == 0.0) | (base.vertices[:, 0] == 1.0)
        | (base.vertices[:, 1] == 0.0) | (base.vertices[:, 1] == 1.0)
    )
    assert np.array_equal(base.boundary_mask, on_bdry)


def test_base_mesh_conforming_positive_area():
    base = build_base_mesh(2, 4)
    v = base.vertices[base.elements]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    assert np.all(np.abs(det) > 0)
    # conformity: every interior edge is shared by exactly two elements
    edges = {}
    for tri in base.elements:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((tri[a], tri[b])))
            edges[key] = edges.get(key, 0) + 1
    assert set(edges.values()) <= {1, 2}


def test_base_mesh_parameter_errors():
    with pytest.raises(ParameterError):
        build_base_mesh(3, 4)
    with pytest.raises(ParameterError):
        build_base_mesh(2, 0)


def test_gamma_floor_values():
    assert gamma_floor(0.5) == pytest.approx(3.0, abs=1e-14)
    assert gamma_floor(0.3) == pytest.approx(5.0, abs=1e-12)
    assert gamma_floor(0.75) == pytest.approx(2.0, abs=1e-14)
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ParameterError):
            gamma_floor(bad)


def test_graded_interval_examples():
    gi = build_graded_interval(4, 2.0, 1.0, 0.8)
    assert np.array_equal(gi.nodes, [0.0, 0.0625, 0.25, 0.5625, 1.0])
    gi = build_graded_interval(2, 4.0, 2.0, 0.5)
    assert np.array_equal(gi.nodes, [0.0, 0.125, 2.0])


def test_graded_interval_floor_guard():
    with pytest.raises(GradingViolationError) as exc:
        build_graded_interval(4, 2.0, 1.0, 0.4)
    assert "3.75" in str(exc.value)


def test_graded_interval_bad_params():
    with pytest.raises(ParameterError):
        build_graded_interval(0, 4.0, 1.0, 0.5)
    with pytest.raises(ParameterError):
        build_graded_interval(4, 4.0, -1.0, 0.5)


def test_node_formula_bit_exactness():
    rng = np.random.default_rng(20240811)
    for _ in range(100):
        M = int(rng.integers(1, 80))
        # admissible gamma always exceeds 3/2 because 3/(2s) > 3/2 for s < 1
        gamma = float(rng.uniform(1.55, 9.0))
        tau = float(rng.uniform(0.05, 10.0))
        s = 3.0 / (2.0 * (gamma - 0.04))  # keeps gamma above the floor
        gi = build_graded_interval(M, gamma, tau, s)
        expected = [(k / M) ** gamma * tau for k in range(M + 1)]
        assert all(gi.nodes[k] == expected[k] for k in range(M + 1))
        assert gi.nodes[0] == 0.0
        assert gi.nodes[M] == tau
        assert np.all(np.diff(gi.nodes) > 0)


def test_grading_monotone_heights():
    rng = np.random.default_rng(7)
    for _ in range(20):
        gamma = float(rng.uniform(1.6, 8.0))
        gi = build_graded_interval(20, gamma, 3.0, s=3.0 / (2.0 * (gamma - 0.05)))
        heights = np.diff(gi.nodes)
        assert np.all(np.diff(heights) >= -1e-15 * gi.tau)


def test_cylinder_counts_2d():
    base = build_base_mesh(2, 2)
    cyl = build_cylinder(base, build_graded_interval(4, 2.0, 1.0, 0.8))
    assert cyl.n_nodes == 45
    assert cyl.n_free == 4
    assert np.array_equal(cyl.free_nodes, [4, 13, 22, 31])


def test_cylinder_counts_1d():
    base = build_base_mesh(1, 4)
    cyl = build_cylinder(base, build_graded_interval(3, 4.0, 1.0, 0.6))
    assert cyl.n_nodes == 20
    assert cyl.n_free == 9


def test_cylinder_top_lid_rule():
    base = build_base_mesh(2, 3)
    cyl = build_cylinder(base, build_graded_interval(1, 4.0, 1.0, 0.5))
    nb = base.n_vertices
    # layer 1 (the lid) is entirely fixed; trace free iff interior in the base
    assert np.all(cyl.dirichlet_mask[nb:])
    trace_free = ~cyl.dirichlet_mask[:nb]
    assert np.array_equal(trace_free, ~base.boundary_mask)


def test_free_fixed_partition():
    base = build_base_mesh(2, 4)
    cyl = build_cylinder(base, build_graded_interval(5, 3.5, 2.0, 0.5))
    free = np.zeros(cyl.n_nodes, dtype=bool)
    free[cyl.free_nodes] = True
    assert np.array_equal(free, ~cyl.dirichlet_mask)
    assert cyl.n_free == np.count_nonzero(~base.boundary_mask) * cyl.interval.M
    # free_index inverts free_nodes
    assert np.array_equal(cyl.free_index[cyl.free_nodes], np.arange(cyl.n_free))
    assert np.all(cyl.free_index[cyl.dirichlet_mask] == -1)


def test_node_coordinates_layer_major():
    base = build_base_mesh(1, 2)
    gi = build_graded_interval(2, 4.0, 1.0, 0.5)
    cyl = build_cylinder(base, gi)
    coords = cyl.node_coordinates()
    assert coords.shape == (9, 2)
    assert np.allclose(coords[:3, 1], 0.0)
    assert np.allclose(coords[3:6, 1], gi.nodes[1])
    assert cyl.node_id(1, 2) == 7


def test_tensor_cells_shape():
    base = build_base_mesh(2, 3)
    cyl = build_cylinder(base, build_graded_interval(4, 3.5, 1.0, 0.5))
    cells = cyl.tensor_cells()
    assert cells.shape == (base.n_elements * 4, 6)
    assert cells.min() >= 0 and cells.max() < cyl.n_nodes
