import numpy as np
import pytest

from hdgml.core.exceptions import ConfigurationError
from hdgml.services.mesh import (
    UNIT_SQUARE,
    build_hierarchy_1d,
    build_hierarchy_2d,
    build_mesh_1d,
    build_mesh_2d,
    export_mesh,
    skeleton_dof_count,
)


def test_structured_mesh_counts(unit_mesh):
    n = unit_mesh.n
    assert unit_mesh.n_vertices == (n + 1) ** 2
    assert unit_mesh.n_triangles == 2 * n * n
    assert unit_mesh.n_edges == 3 * n * n + 2 * n
    assert unit_mesh.boundary_edges.sum() == 4 * n
    np.testing.assert_allclose(unit_mesh.areas, 1.0 / (2 * n * n))
    assert unit_mesh.h == pytest.approx(np.sqrt(2.0) / n)


def test_edge_triangle_incidence(unit_mesh):
    for e, (t0, t1) in enumerate(unit_mesh.edge_triangles):
        assert e in unit_mesh.triangle_edges[t0]
        if unit_mesh.boundary_edges[e]:
            assert t1 == -1
        else:
            assert e in unit_mesh.triangle_edges[t1]


def test_triangles_are_counter_clockwise(unit_mesh):
    p = unit_mesh.vertices[unit_mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    assert np.all(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] > 0)


def test_locate_returns_owner_of_centroids():
    mesh = build_mesh_2d(4, box=(-0.5, 0.5, -0.5, 0.5))
    np.testing.assert_array_equal(mesh.locate(mesh.centroids), np.arange(mesh.n_triangles))


def test_hierarchy_is_nested(small_hierarchy):
    for level in range(small_hierarchy.n_levels):
        assert small_hierarchy.nesting_error(level) < 1e-12
        coarse = small_hierarchy[level]
        fine = small_hierarchy[level + 1]
        children = small_hierarchy.child_edges[level]
        assert children.shape == (coarse.n_edges, 2)
        np.testing.assert_allclose(
            fine.edge_lengths[children].sum(axis=1), coarse.edge_lengths, rtol=1e-12
        )
        cells = small_hierarchy.child_cells[level]
        assert cells.shape == (coarse.n_triangles, 4)
        np.testing.assert_array_equal(np.sort(cells.ravel()), np.arange(fine.n_triangles))


def test_parent_maps(small_hierarchy):
    parent = small_hierarchy.parent_edges(1)
    fine = small_hierarchy[1]
    coarse = small_hierarchy[0]
    assert np.sum(parent >= 0) == 2 * coarse.n_edges
    assert np.sum(parent < 0) == fine.n_edges - 2 * coarse.n_edges
    cells = small_hierarchy.parent_cells(1)
    np.testing.assert_array_equal(np.bincount(cells), np.full(coarse.n_triangles, 4))
    with pytest.raises(ConfigurationError):
        small_hierarchy.parent_edges(0)


def test_hierarchy_1d_injection():
    hierarchy = build_hierarchy_1d(0.0, 1.0, 4, 3)
    assert [m.n_elements for m in hierarchy.meshes] == [4, 8, 16]
    coarse, fine = hierarchy[0], hierarchy[1]
    injected = hierarchy.child_edges[0][:, 0]
    np.testing.assert_allclose(fine.nodes[injected], coarse.nodes)


def test_periodic_mesh_identifies_end_nodes():
    mesh = build_mesh_1d(0.0, 1.0, 8, periodic=True)
    assert mesh.n_nodes == 8
    assert mesh.cells[-1].tolist() == [7, 0]
    assert mesh.boundary_nodes.size == 0


@pytest.mark.parametrize("p", [1, 2, 3])
def test_skeleton_dof_count(unit_mesh, p):
    assert skeleton_dof_count(unit_mesh, p) == (p + 1) * 16
    assert skeleton_dof_count(unit_mesh, p, dirichlet=True) == (p + 1) * 8


@pytest.mark.parametrize(
    "call",
    [
        lambda: build_mesh_2d(0),
        lambda: build_mesh_2d(2, box=(0.0, 0.0, 0.0, 1.0)),
        lambda: build_mesh_1d(1.0, 0.0, 4),
        lambda: build_hierarchy_2d(2, 0),
        lambda: build_hierarchy_2d(0, 2),
        lambda: build_hierarchy_1d(0.0, 1.0, 2, 0),
        lambda: build_mesh_2d(2, 1.0),
    ],
)
def test_invalid_meshes_are_rejected(call):
    with pytest.raises(ConfigurationError):
        call()


def test_export_mesh(tmp_path):
    mesh = build_mesh_2d(3, box=UNIT_SQUARE, level=2)
    path = export_mesh(mesh, tmp_path / "mesh.txt")
    lines = path.read_text().splitlines()
    assert lines[0] == "# n=3 level=2 box=0 1 0 1"
    kinds = [line.split()[0] for line in lines[1:]]
    assert kinds.count("v") == mesh.n_vertices
    assert kinds.count("e") == mesh.n_edges
    assert kinds.count("t") == mesh.n_triangles
    assert len(lines) == 1 + mesh.n_vertices + mesh.n_edges + mesh.n_triangles
    edges = [line.split() for line in lines if line.startswith("e ")]
    assert sum(int(fields[4]) for fields in edges) == 12
    assert lines[-1] == "t {} {} {} {}".format(mesh.n_triangles - 1, *mesh.triangles[-1])


def test_export_single_cell_mesh(tmp_path):
    path = export_mesh(build_mesh_2d(1), tmp_path / "mesh.txt")
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 4 + 5 + 2
    assert lines[1] == "v 0 0 0"
    assert "level=0" in lines[0]


@pytest.mark.parametrize(
    "n0, levels, finest, edges",
    [(1, 1, 1, 5), (2, 2, 4, 56), (16, 4, 128, 49408)],
)
def test_hierarchy_levels_count_meshes(n0, levels, finest, edges):
    hierarchy = build_hierarchy_2d(n0, levels)
    assert len(hierarchy) == levels
    assert [mesh.level for mesh in hierarchy.meshes] == list(range(levels))
    assert hierarchy.finest.n == finest
    assert hierarchy.finest.n_edges == edges
    if levels == 1:
        assert hierarchy.finest.n_triangles == 2
        assert hierarchy.child_edges == []


def test_hierarchy_2d_children_pair_up_coarse_edges():
    hierarchy = build_hierarchy_2d(2, 2)
    coarse, fine = hierarchy[0], hierarchy[1]
    children = hierarchy.child_edges[0]
    assert children.shape == (coarse.n_edges, 2)
    assert np.unique(children).size == 2 * coarse.n_edges
    np.testing.assert_allclose(fine.edge_lengths[children].sum(axis=1), coarse.edge_lengths)


@pytest.mark.parametrize(
    "a, b, n0, levels, h",
    [(0.0, 10.0, 2000, 1, 0.005), (0.0, 1.0, 1, 1, 1.0), (0.0, 1.0, 2, 3, 0.125)],
)
def test_hierarchy_1d_levels_count_meshes(a, b, n0, levels, h):
    hierarchy = build_hierarchy_1d(a, b, n0, levels)
    assert len(hierarchy) == levels
    assert hierarchy.finest.n_elements == n0 * 2 ** (levels - 1)
    assert hierarchy.finest.h == pytest.approx(h)
