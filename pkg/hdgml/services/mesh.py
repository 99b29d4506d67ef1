from pathlib import Path
from typing import Tuple, Union

import numpy as np
from loguru import logger

from hdgml.core.exceptions import ConfigurationError
from hdgml.models.mesh import Mesh1D, Mesh2D, MeshHierarchy

UNIT_SQUARE = (0.0, 1.0, 0.0, 1.0)
CENTERED_SQUARE = (-0.5, 0.5, -0.5, 0.5)


def build_mesh_1d(a: float, b: float, n_elements: int, level: int = 0, periodic: bool = False) -> Mesh1D:
    return Mesh1D(a=a, b=b, n_elements=n_elements, level=level, periodic=periodic)


def build_mesh_2d(n: int, box: Tuple[float, float, float, float] = UNIT_SQUARE, level: int = 0) -> Mesh2D:
    """Structured n x n cell triangulation with global vertex/edge/triangle numbering.

    Vertex (i, j) has id j*(n+1) + i. Cell (i, j) gives triangles 2c = (v00, v10, v11)
    and 2c+1 = (v00, v11, v01), both counter-clockwise. Edges are sorted by their
    (min, max) vertex ids; local edge k of a triangle is opposite its vertex k.
    """
    if n < 1:
        raise ConfigurationError(f"number of cells per side must be >= 1, got {n}")
    if np.ndim(box) != 1 or len(box) != 4:
        raise ConfigurationError(f"box must be (x0, x1, y0, y1), got {box!r}")
    x0, x1, y0, y1 = box
    if not (x1 > x0 and y1 > y0):
        raise ConfigurationError(f"degenerate box {box}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.empty((2 * n * n, 3), dtype=int)
    triangles[0::2] = lower
    triangles[1::2] = upper

    local = np.stack(
        [triangles[:, [(k + 1) % 3, (k + 2) % 3]] for k in range(3)], axis=1
    )  # (nt, 3, 2) local edges in counter-clockwise orientation
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    triangle_edges = inverse.reshape(-1, 3)
    triangle_edge_signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)

    n_edges = edges.shape[0]
    flat = triangle_edges.ravel()
    owners = np.repeat(np.arange(triangles.shape[0]), 3)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n_edges)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    edge_triangles = -np.ones((n_edges, 2), dtype=int)
    edge_triangles[:, 0] = owners[order][starts]
    shared = counts == 2
    edge_triangles[shared, 1] = owners[order][starts[shared] + 1]

    mesh = Mesh2D(
        n=n,
        level=level,
        box=tuple(float(v) for v in box),
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        triangle_edges=triangle_edges,
        triangle_edge_signs=triangle_edge_signs,
        edge_triangles=edge_triangles,
        boundary_edges=~shared,
    )
    logger.debug(
        f"Built mesh level {level}: n={n}, {mesh.n_triangles} triangles, {n_edges} edges"
    )
    return mesh


def _edge_keys(mesh: Mesh2D) -> np.ndarray:
    return mesh.edges[:, 0] * mesh.n_vertices + mesh.edges[:, 1]


def _refine_maps(coarse: Mesh2D, fine: Mesh2D) -> Tuple[np.ndarray, np.ndarray]:
    """Child edges (ne_c, 2) and child triangles (nt_c, 4) of a uniform refinement"""
    nc = coarse.n
    nf = fine.n

    def fine_vertex(ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
        return cj * (nf + 1) + ci

    ci = np.arange(coarse.n_vertices) % (nc + 1)
    cj = np.arange(coarse.n_vertices) // (nc + 1)

    a, b = coarse.edges[:, 0], coarse.edges[:, 1]
    A = fine_vertex(2 * ci[a], 2 * cj[a])
    B = fine_vertex(2 * ci[b], 2 * cj[b])
    M = fine_vertex(ci[a] + ci[b], cj[a] + cj[b])
    keys = _edge_keys(fine)

    def lookup(p: np.ndarray, q: np.ndarray) -> np.ndarray:
        lo = np.minimum(p, q)
        hi = np.maximum(p, q)
        wanted = lo * fine.n_vertices + hi
        idx = np.searchsorted(keys, wanted)
        if np.any(idx >= keys.size) or np.any(keys[np.minimum(idx, keys.size - 1)] != wanted):
            raise ConfigurationError("fine mesh is not a uniform refinement of the coarse mesh")
        return idx

    child_edges = np.stack([lookup(A, M), lookup(M, B)], axis=1)

    p = coarse.vertices[coarse.triangles]
    m01 = 0.5 * (p[:, 0] + p[:, 1])
    m12 = 0.5 * (p[:, 1] + p[:, 2])
    m20 = 0.5 * (p[:, 2] + p[:, 0])
    sub = [
        (p[:, 0], m01, m20),
        (m01, p[:, 1], m12),
        (m20, m12, p[:, 2]),
        (m01, m12, m20),
    ]
    child_triangles = np.stack(
        [fine.locate((u + v + w) / 3.0) for u, v, w in sub], axis=1
    )
    return child_edges, child_triangles


def _check_levels(levels: int) -> None:
    if levels < 1:
        raise ConfigurationError(f"a hierarchy needs at least one mesh, got levels={levels}")


def build_hierarchy_2d(
    n0: int,
    levels: int,
    box: Tuple[float, float, float, float] = UNIT_SQUARE,
) -> MeshHierarchy:
    """`levels` nested meshes; level l has n0 * 2**l cells per side"""
    _check_levels(levels)
    meshes = [build_mesh_2d(n0 * 2 ** l, box=box, level=l) for l in range(levels)]
    child_edges = []
    child_cells = []
    for coarse, fine in zip(meshes[:-1], meshes[1:]):
        edges, cells = _refine_maps(coarse, fine)
        child_edges.append(edges)
        child_cells.append(cells)
    logger.info(
        f"Mesh hierarchy: {levels} levels, n={n0}..{meshes[-1].n}, "
        f"{meshes[-1].n_edges} edges on the finest level"
    )
    return MeshHierarchy(meshes=meshes, child_edges=child_edges, child_cells=child_cells)


def build_hierarchy_1d(
    a: float, b: float, n0: int, levels: int, periodic: bool = False
) -> MeshHierarchy:
    """`levels` nested 1D meshes; coarse node i is fine node 2i, cell e has children 2e, 2e+1"""
    _check_levels(levels)
    meshes = [build_mesh_1d(a, b, n0 * 2 ** l, level=l, periodic=periodic) for l in range(levels)]
    child_edges = [2 * np.arange(m.n_nodes)[:, None] for m in meshes[:-1]]
    child_cells = [
        np.stack([2 * np.arange(m.n_elements), 2 * np.arange(m.n_elements) + 1], axis=1)
        for m in meshes[:-1]
    ]
    return MeshHierarchy(meshes=meshes, child_edges=child_edges, child_cells=child_cells)


def skeleton_dof_count(mesh: Union[Mesh1D, Mesh2D], p: int, dirichlet: bool = False) -> int:
    """Dimension of the trace space M_h: (p+1) per edge in 2D, one per node in 1D"""
    if isinstance(mesh, Mesh1D):
        count = mesh.n_nodes
        return count - mesh.boundary_nodes.size if dirichlet else count
    count = mesh.n_edges
    if dirichlet:
        count -= int(mesh.boundary_edges.sum())
    return (p + 1) * count


def export_mesh(mesh: Mesh2D, path: Union[str, Path]) -> Path:
    """Plain-text listing, one entity per line.

    A `# n level box` header, then `v id x y`, `e id a b boundary` and `t id a b c` lines.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# n={mesh.n} level={mesh.level} box={' '.join(f'{v:.17g}' for v in mesh.box)}"]
    lines += [f"v {i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(mesh.vertices)]
    lines += [
        f"e {i} {a} {b} {int(boundary)}"
        for i, ((a, b), boundary) in enumerate(zip(mesh.edges, mesh.boundary_edges))
    ]
    lines += [f"t {i} {a} {b} {c}" for i, (a, b, c) in enumerate(mesh.triangles)]
    path.write_text("\n".join(lines) + "\n")
    logger.info(
        f"Exported mesh level {mesh.level} (n={mesh.n}): {mesh.n_vertices} vertices, "
        f"{mesh.n_edges} edges, {mesh.n_triangles} triangles to {path}"
    )
    return path
