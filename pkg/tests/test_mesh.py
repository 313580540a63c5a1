import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlfem import (ConstructionError, InvalidArgumentError, Mesh, MeshValidationError, Region,
                   build_squared_grid, build_uniform_grid, load_mesh, save_mesh)
from nlfem.mesh import (distance_to_square, element_barycenter, format_mesh, mesh_statistics,
                        parse_mesh)


def _edge_counts(mesh):
    e = mesh.elements
    edges = np.sort(np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]]), axis=1)
    return np.unique(edges, axis=0, return_counts=True)


def test_uniform_n10_statistics(uniform10):
    s = mesh_statistics(uniform10)
    assert s.h_max == pytest.approx(math.sqrt(2) / 10, rel=1e-14)
    assert s.K_omega == 200
    # 9 x 9 interior lattice
    assert s.J_omega == 81
    assert s.J == 13 * 13


def test_smallest_grid_has_one_unknown():
    m = build_uniform_grid(2, 0.5)
    assert m.n_interior == 1
    np.testing.assert_allclose(m.nodes[0], [0.5, 0.5])


def test_layer_rounds_up_to_whole_cells():
    m = build_uniform_grid(10, 0.15)
    assert m.vertices.min() == pytest.approx(-0.2)
    assert m.vertices.max() == pytest.approx(1.2)


@pytest.mark.parametrize("n", [2, 5, 10, 20])
def test_refinement_halves_h_max(n):
    assert build_uniform_grid(2 * n, 0.1).h_max == pytest.approx(build_uniform_grid(n, 0.1).h_max / 2,
                                                                  rel=1e-15)


def test_node_order_puts_interior_first(uniform10):
    m = uniform10
    x = m.nodes
    J = m.n_interior
    strictly = (x[:, 0] > 0) & (x[:, 0] < 1) & (x[:, 1] > 0) & (x[:, 1] < 1)
    assert strictly[:J].all()
    assert not strictly[J:].any()


def test_boundary_nodes_are_constrained(uniform10):
    x = uniform10.nodes[uniform10.n_interior:]
    on_boundary = (np.isclose(x, 0) | np.isclose(x, 1)).any(axis=1) & (distance_to_square(x) == 0)
    assert on_boundary.sum() == 40


def test_conformity(uniform10):
    _, counts = _edge_counts(uniform10)
    assert counts.max() == 2
    # the outer rim of a 13 x 13 vertex grid has 48 edges
    assert (counts == 1).sum() == 48


def test_regions_follow_barycenters(uniform10):
    b = uniform10.barycenters
    inside = (b > 0).all(axis=1) & (b < 1).all(axis=1)
    assert np.array_equal(uniform10.regions == Region.OMEGA, inside)


def test_invalid_arguments():
    with pytest.raises(InvalidArgumentError):
        build_uniform_grid(1, 0.1)
    with pytest.raises(InvalidArgumentError):
        build_uniform_grid(10, 0.0)
    with pytest.raises(InvalidArgumentError):
        build_squared_grid(10, -1.0)


def test_squared_grid_moves_interior_vertices():
    m = build_squared_grid(10, 0.1)
    u = build_uniform_grid(10, 0.1)
    i = np.flatnonzero(np.all(np.isclose(u.vertices, [0.5, 0.5]), axis=1))[0]
    np.testing.assert_allclose(m.vertices[i], [0.5, 0.25])
    j = np.flatnonzero(np.all(np.isclose(u.vertices, [0.5, 0.0]), axis=1))[0]
    np.testing.assert_array_equal(m.vertices[j], u.vertices[j])
    # rows above and below Omega stay; the side strips follow the band map to stay conforming
    off_band = (u.vertices[:, 1] <= 0) | (u.vertices[:, 1] >= 1)
    np.testing.assert_array_equal(m.vertices[off_band], u.vertices[off_band])


def test_squared_grid_statistics_match_reference():
    s = mesh_statistics(build_squared_grid(10, 0.1))
    assert s.h_min == pytest.approx(0.1004, abs=1e-4)
    assert s.h_max == pytest.approx(0.2147, abs=1e-4)
    assert s.J_omega == 81
    assert mesh_statistics(build_squared_grid(40, 0.1)).J_omega == 1521


def test_squared_grid_is_valid_mesh(squared10):
    _, counts = _edge_counts(squared10)
    assert counts.max() == 2
    assert (squared10.areas > 0).all()


def test_squared_grid_rejects_inverted_elements(monkeypatch):
    import nlfem.mesh as mesh_mod

    orig = mesh_mod.signed_areas
    monkeypatch.setattr(mesh_mod, "signed_areas", lambda v, e: -orig(v, e))
    with pytest.raises(ConstructionError):
        build_squared_grid(4, 0.25)


def test_element_barycenter():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, 2.0], [3.0, 3.0]])
    m = Mesh(v, np.array([[0, 1, 2], [0, 3, 4], [0, 5, 5]]), np.array([1, 1, 1]), 0.1)
    np.testing.assert_allclose(element_barycenter(m, 0), [1 / 3, 1 / 3])
    np.testing.assert_allclose(element_barycenter(m, 1), [2 / 3, 2 / 3])
    np.testing.assert_allclose(element_barycenter(m, 2), [2.0, 2.0])


def test_round_trip(tmp_path, squared10):
    path = tmp_path / "sq.nlmesh"
    save_mesh(squared10, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.vertices, squared10.vertices)
    np.testing.assert_array_equal(back.elements, squared10.elements)
    np.testing.assert_array_equal(back.regions, squared10.regions)
    assert back.delta == squared10.delta
    assert back.n_interior == squared10.n_interior


def test_load_overrides_delta(tmp_path, uniform10):
    path = tmp_path / "u.nlmesh"
    save_mesh(uniform10, path)
    assert load_mesh(path, 0.05).delta == 0.05
    # a layer of width 0.1 cannot serve a horizon of 0.2
    with pytest.raises(MeshValidationError):
        load_mesh(path, 0.2)


def test_load_normalizes_orientation(uniform10):
    lines = format_mesh(uniform10).splitlines()
    nv = uniform10.n_nodes
    a, b, c, r = lines[2 + nv].split()
    lines[2 + nv] = f"{a} {c} {b} {r}"
    m = parse_mesh("# comment line\n" + "\n".join(lines))
    assert (m.areas > 0).all()


TOY = """nlmesh 1 0.1
4 2
-1 -1
2 -1
2 2
-1 2
0 1 2 1
0 2 3 1
"""


def test_straddling_element_rejected():
    with pytest.raises(MeshValidationError, match="straddles"):
        parse_mesh(TOY)


@pytest.mark.parametrize("text", [
    "nlmesh 2 0.1\n0 0\n",
    "nlmesh 1 0.1\n4 2\n0 0\n",
    "nlmesh 1 0.1\n4 2\n-1 -1\n2 -1\n2 2\n-1 2\n0 1 2 5\n0 2 3 1\n",
    "nlmesh 1 0.1\n4 2\n-1 -1\n2 -1\n2 2\n-1 2\n0 1 9 1\n0 2 3 1\n",
    "nlmesh 1 0.1\n4 2\n-1 -1\n2 -1\nx 2\n-1 2\n0 1 2 1\n0 2 3 1\n",
])
def test_malformed_files_rejected(text):
    with pytest.raises(MeshValidationError):
        parse_mesh(text)


def test_mislabeled_region_rejected(uniform10):
    text = format_mesh(uniform10).splitlines()
    nv = uniform10.n_nodes
    k = int(uniform10.omega_elements[0])
    a, b, c, _ = text[2 + nv + k].split()
    text[2 + nv + k] = f"{a} {b} {c} 1"
    with pytest.raises(MeshValidationError):
        parse_mesh("\n".join(text))


def test_hanging_node_rejected(uniform10):
    # drop one Omega element: its edges become boundary edges inside the layer
    text = format_mesh(uniform10).splitlines()
    nv, ne = uniform10.n_nodes, uniform10.n_elements
    k = int(uniform10.omega_elements[50])
    del text[2 + nv + k]
    text[1] = f"{nv} {ne - 1}"
    with pytest.raises(MeshValidationError):
        parse_mesh("\n".join(text))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 16), delta=st.floats(0.01, 0.6), squared=st.booleans())
def test_grid_invariants(n, delta, squared):
    m = (build_squared_grid if squared else build_uniform_grid)(n, delta)
    assert (m.areas > 0).all()
    _, counts = _edge_counts(m)
    assert counts.max() == 2
    assert m.n_interior == (n - 1) ** 2
    # the rim of the layer is at least delta away from Omega
    rim = m.vertices[(np.abs(m.vertices - 0.5).max(axis=1) >= m.vertices.max() - 0.5 - 1e-12)]
    assert distance_to_square(rim).min() >= delta * (1 - 1e-9)
    assert (m.regions == Region.OMEGA).sum() == 2 * n * n
