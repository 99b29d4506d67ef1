from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from loguru import logger

from hdgml.core.config import settings
from hdgml.core.exceptions import ConfigurationError
from hdgml.models.mesh import Mesh1D, Mesh2D, MeshHierarchy
from hdgml.models.system import PoissonSystem, SkeletonSystem, TransferOperator
from hdgml.services.hdg import assemble_poisson, element_basis
from hdgml.services.quadrature import gauss_lobatto_nodes


@dataclass
class ContinuousReconstruction:
    """Continuous piecewise P_p function given by Lagrange node values on every triangle"""

    mesh: Mesh2D
    p: int
    node_values: np.ndarray
    coefficients: np.ndarray
    centers: np.ndarray
    scale: float

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        owners = self.mesh.locate(points)
        values, _ = element_basis(np.zeros(2), self.scale, self.p, points - self.centers[owners])
        return np.einsum("ij,ij->i", values, self.coefficients[owners])


def lagrange_nodes(mesh: Mesh2D, t: int, p: int) -> np.ndarray:
    """Nodes of continuous P_p on a triangle: vertices, GLL edge nodes, interior lattice"""
    verts = mesh.vertices[mesh.triangles[t]]
    nodes = [verts]
    s = gauss_lobatto_nodes(p)[1:-1]
    for k in range(3):
        a, b = mesh.vertices[mesh.edges[mesh.triangle_edges[t, k]]]
        nodes.append(a + np.outer(0.5 * (1.0 + s), b - a))
    lattice = [
        (i, j, p - i - j)
        for i in range(1, p)
        for j in range(1, p - i)
        if p - i - j >= 1
    ]
    if lattice:
        bary = np.array(lattice, dtype=float) / p
        nodes.append(bary @ verts)
    return np.vstack(nodes)


def _node_count(p: int) -> int:
    return (p + 1) * (p + 2) // 2


def _class_lagrange(system: SkeletonSystem) -> List[np.ndarray]:
    """Monomial coefficients of the nodal basis for every local operator class"""
    mesh = system.mesh
    out = []
    for op in system.local_ops:
        nodes = lagrange_nodes(mesh, op.element, system.p)
        vander, _ = element_basis(op.center, op.scale, system.p, nodes)
        out.append(np.linalg.inv(vander))
    return out


def _vertex_average(mesh: Mesh2D, p: int, pin_boundary: bool) -> sp.csr_matrix:
    """(n_vertices, n_dofs): mean of the trace endpoint values over the edges at a vertex"""
    edges = np.arange(mesh.n_edges)
    keep = ~mesh.boundary_edges if pin_boundary else np.ones(mesh.n_edges, dtype=bool)
    edges = edges[keep]
    rows = np.concatenate([mesh.edges[edges, 0], mesh.edges[edges, 1]])
    cols = np.concatenate([edges * (p + 1), edges * (p + 1) + p])
    counts = np.bincount(rows, minlength=mesh.n_vertices)
    data = 1.0 / counts[rows]
    return sp.coo_matrix(
        (data, (rows, cols)), shape=(mesh.n_vertices, mesh.n_edges * (p + 1))
    ).tocsr()


def reconstruction_matrix(system: SkeletonSystem, pin_boundary: bool = False) -> sp.csr_matrix:
    """(n_triangles * n_nodes, n_full) map from trace coefficients to Lagrange node values.

    Vertex values average the adjacent edges, edge nodes copy the trace, interior
    nodes (p >= 3) take the value of the local solution U of the trace.
    """
    mesh = system.mesh
    p = system.p
    nn = _node_count(p)
    nt = mesh.n_triangles
    n = mesh.n_edges * (p + 1)

    select = sp.coo_matrix(
        (np.ones(3 * nt), ((np.arange(nt)[:, None] * nn + np.arange(3)).ravel(), mesh.triangles.ravel())),
        shape=(nt * nn, mesh.n_vertices),
    ).tocsr()
    result = select @ _vertex_average(mesh, p, pin_boundary)

    rows, cols, data = [], [], []
    if p >= 2:
        inner = np.arange(1, p)
        for k in range(3):
            node = 3 + k * (p - 1) + np.arange(p - 1)
            rows.append((np.arange(nt)[:, None] * nn + node).ravel())
            cols.append((mesh.triangle_edges[:, k][:, None] * (p + 1) + inner).ravel())
            data.append(np.ones(nt * (p - 1)))
    if p >= 3:
        interior = np.arange(3 + 3 * (p - 1), nn)
        for cls, op in enumerate(system.local_ops):
            elements = np.flatnonzero(system.class_index == cls)
            nodes = lagrange_nodes(mesh, op.element, p)[interior]
            values, _ = element_basis(op.center, op.scale, p, nodes)
            u_rows = values @ op.trace_solve[op.dim * op.n_basis :]
            if np.allclose(u_rows.imag, 0.0):
                u_rows = u_rows.real
            block = np.broadcast_to(u_rows, (elements.size,) + u_rows.shape)
            r = elements[:, None, None] * nn + interior[None, :, None]
            c = system.element_dofs[elements][:, None, :]
            r, c = np.broadcast_arrays(r, c)
            rows.append(r.ravel())
            cols.append(c.ravel())
            data.append(block.ravel())
    if rows:
        extra = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nt * nn, n),
        ).tocsr()
        result = result + extra
    if pin_boundary:
        boundary = np.repeat(mesh.boundary_edges, p + 1)
        result = result @ sp.diags((~boundary).astype(float))
    return result.tocsr()


def averaging_to_continuous(
    system: SkeletonSystem, trace: np.ndarray, pin_boundary: bool = False
) -> ContinuousReconstruction:
    """Continuous P_p function on the system's mesh built from a trace vector"""
    mesh = system.mesh
    nn = _node_count(system.p)
    values = reconstruction_matrix(system, pin_boundary) @ system.extend(trace)
    values = values.reshape(mesh.n_triangles, nn)
    lagrange = _class_lagrange(system)
    coefficients = np.empty((mesh.n_triangles, lagrange[0].shape[0]), dtype=values.dtype)
    for cls, inv in enumerate(lagrange):
        elements = np.flatnonzero(system.class_index == cls)
        coefficients[elements] = values[elements] @ inv.T
    return ContinuousReconstruction(
        mesh=mesh,
        p=system.p,
        node_values=values,
        coefficients=coefficients,
        centers=mesh.centroids,
        scale=system.local_ops[0].scale,
    )


def _evaluation_matrix(coarse: SkeletonSystem, fine_mesh: Mesh2D) -> sp.csr_matrix:
    """(n_fine, n_triangles * n_nodes): nodal basis of the coarse triangles at the fine trace nodes"""
    mesh = coarse.mesh
    p = coarse.p
    nn = _node_count(p)
    owners = mesh.locate(fine_mesh.edge_midpoints)
    s = gauss_lobatto_nodes(p)
    a = fine_mesh.vertices[fine_mesh.edges[:, 0]]
    b = fine_mesh.vertices[fine_mesh.edges[:, 1]]
    x = a[:, None, :] + 0.5 * (1.0 + s)[None, :, None] * (b - a)[:, None, :]
    lagrange = _class_lagrange(coarse)
    centers = mesh.centroids
    values = np.empty((fine_mesh.n_edges, p + 1, nn))
    classes = coarse.class_index[owners]
    for cls, inv in enumerate(lagrange):
        edges = np.flatnonzero(classes == cls)
        if edges.size == 0:
            continue
        local = (x[edges] - centers[owners[edges]][:, None, :]).reshape(-1, 2)
        v, _ = element_basis(np.zeros(2), coarse.local_ops[cls].scale, p, local)
        values[edges] = (v @ inv).reshape(edges.size, p + 1, nn)
    rows = np.broadcast_to(
        (np.arange(fine_mesh.n_edges)[:, None] * (p + 1) + np.arange(p + 1))[:, :, None],
        values.shape,
    )
    cols = np.broadcast_to((owners[:, None] * nn + np.arange(nn))[:, None, :], values.shape)
    matrix = sp.coo_matrix(
        (values.ravel(), (rows.ravel(), cols.ravel())),
        shape=(fine_mesh.n_edges * (p + 1), mesh.n_triangles * nn),
    ).tocsr()
    matrix.data[np.abs(matrix.data) < 1e-14] = 0.0
    matrix.eliminate_zeros()
    return matrix


def _interpolation_1d(coarse: Mesh1D, fine: Mesh1D) -> sp.csr_matrix:
    """Linear interpolation of coarse nodal values at the fine nodes"""
    x = fine.nodes
    position = (x - coarse.a) / coarse.h
    cell = np.clip(np.floor(position + 1e-12).astype(int), 0, coarse.n_elements - 1)
    xi = position - cell
    left = cell
    right = cell + 1
    if coarse.periodic:
        right = right % coarse.n_elements
    rows = np.concatenate([np.arange(x.size), np.arange(x.size)])
    cols = np.concatenate([left, right])
    data = np.concatenate([1.0 - xi, xi])
    keep = np.abs(data) > 1e-14
    return sp.coo_matrix(
        (data[keep], (rows[keep], cols[keep])), shape=(fine.n_nodes, coarse.n_nodes)
    ).tocsr()


def _mass(system: SkeletonSystem, full: bool) -> sp.csr_matrix:
    if not full or system.interior is None:
        return system.mass
    if isinstance(system, PoissonSystem):
        return system.full_mass
    raise ConfigurationError("full-space mass is only kept for Poisson systems")


def _mass_inverse(system: SkeletonSystem, full: bool) -> sp.csr_matrix:
    if not full or system.interior is None:
        return system.mass_inverse
    if isinstance(system, PoissonSystem):
        return system.full_mass_inverse
    raise ConfigurationError("full-space mass is only kept for Poisson systems")


def interpolation_matrix(
    coarse: SkeletonSystem, fine: SkeletonSystem, pin_boundary: Optional[bool] = None
) -> sp.csr_matrix:
    """I = E W from the coarse trace space to the fine trace space.

    With pin_boundary (default: whenever the systems eliminate boundary dofs) the
    vertex averaging ignores boundary edges and the matrix is restricted to the
    active dofs of both systems.
    """
    if coarse.p != fine.p:
        raise ConfigurationError(f"degree mismatch between levels: {coarse.p} vs {fine.p}")
    if pin_boundary is None:
        pin_boundary = coarse.interior is not None
    if coarse.dim == 1:
        matrix = _interpolation_1d(coarse.mesh, fine.mesh)
    else:
        if coarse.mesh.n > fine.mesh.n:
            raise ConfigurationError("the fine mesh must be a refinement of the coarse mesh")
        matrix = _evaluation_matrix(coarse, fine.mesh) @ reconstruction_matrix(coarse, pin_boundary)
    if pin_boundary:
        rows = fine.interior if fine.interior is not None else np.arange(matrix.shape[0])
        cols = coarse.interior if coarse.interior is not None else np.arange(matrix.shape[1])
        matrix = matrix[rows][:, cols]
    return matrix.tocsr()


def build_transfer(
    coarse: SkeletonSystem,
    fine: SkeletonSystem,
    pin_boundary: Optional[bool] = None,
    level: Optional[int] = None,
) -> TransferOperator:
    """Prolongation I and restriction Q = M_c^{-1} I^H M_f between two systems"""
    if pin_boundary is None:
        pin_boundary = coarse.interior is not None
    full = not pin_boundary
    matrix = interpolation_matrix(coarse, fine, pin_boundary)
    adjoint = (_mass_inverse(coarse, full) @ matrix.conj().T @ _mass(fine, full)).tocsr()
    return TransferOperator(
        level=coarse.level if level is None else level,
        matrix=matrix,
        adjoint=adjoint,
    )


def identity_transfer(system: SkeletonSystem) -> TransferOperator:
    eye = sp.identity(system.n_dofs, format="csr")
    return TransferOperator(level=system.level, matrix=eye, adjoint=eye.copy())


def build_level_transfers(systems: List[SkeletonSystem], mode: str = "direct") -> List[TransferOperator]:
    """Transfers from every level to the finest one.

    "direct" evaluates coarse reconstructions on the finest skeleton, "composed"
    multiplies one-level transfers; both give I_L = identity.
    """
    if mode not in ("direct", "composed"):
        raise ConfigurationError(f"unknown transfer mode {mode!r}")
    finest = systems[-1]
    transfers: List[Optional[TransferOperator]] = [None] * len(systems)
    transfers[-1] = identity_transfer(finest)
    if mode == "direct":
        for level, system in enumerate(systems[:-1]):
            transfers[level] = build_transfer(system, finest, level=level)
    else:
        product = sp.identity(finest.n_dofs, format="csr")
        for level in range(len(systems) - 2, -1, -1):
            step = interpolation_matrix(systems[level], systems[level + 1])
            product = (product @ step).tocsr()
            adjoint = (systems[level].mass_inverse @ product.conj().T @ finest.mass).tocsr()
            transfers[level] = TransferOperator(level=level, matrix=product, adjoint=adjoint, mode="composed")
    for transfer in transfers:
        transfer.mode = mode
    logger.debug(f"Built {len(systems)} transfers ({mode})")
    return transfers


@dataclass
class StabilityResult:
    level: int
    finest: int
    p: int
    trial_ratio: float
    power_ratio: float
    iterations: int


def energy_stability_ratio(
    hierarchy: MeshHierarchy,
    level: int,
    p: int,
    trials: int = 20,
    seed: Optional[int] = None,
    power_iterations: int = 500,
    tol: float = 1e-10,
) -> StabilityResult:
    """Largest observed a_L(I mu, I mu) / a_l(mu, mu) for the Poisson transfer to the finest level"""
    finest = hierarchy.n_levels
    if not 0 <= level <= finest:
        raise ConfigurationError(f"level {level} outside 0..{finest}")
    coarse = assemble_poisson(hierarchy[level], p)
    fine = assemble_poisson(hierarchy[finest], p) if level != finest else coarse
    matrix = interpolation_matrix(coarse, fine, pin_boundary=True) if level != finest else sp.identity(
        coarse.n_dofs, format="csr"
    )
    a_coarse = coarse.stiffness
    pulled = (matrix.T @ fine.stiffness @ matrix).tocsr()

    rng = np.random.default_rng(settings.RANDOM_SEED if seed is None else seed)
    best = 0.0
    done = 0
    while done < trials:
        mu = rng.standard_normal(coarse.n_dofs)
        denominator = mu @ (a_coarse @ mu)
        if denominator <= 0.0:
            continue
        best = max(best, float(mu @ (pulled @ mu)) / float(denominator))
        done += 1

    factor = spla.splu(a_coarse.tocsc())
    x = rng.standard_normal(coarse.n_dofs)
    ratio = 0.0
    iterations = 0
    for iterations in range(1, power_iterations + 1):
        y = factor.solve(pulled @ x)
        estimate = float(x @ (pulled @ x)) / float(x @ (a_coarse @ x))
        x = y / np.linalg.norm(y)
        if abs(estimate - ratio) <= tol * max(1.0, abs(estimate)):
            ratio = estimate
            break
        ratio = estimate
    logger.info(
        f"Energy ratio p={p} level {level}->{finest}: trials {best:.4f}, power {ratio:.4f} ({iterations} its)"
    )
    return StabilityResult(
        level=level, finest=finest, p=p, trial_ratio=best, power_ratio=max(ratio, best), iterations=iterations
    )
