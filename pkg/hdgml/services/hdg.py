from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite
from loguru import logger

from hdgml.core.exceptions import ConfigurationError, SingularLocalProblemError
from hdgml.models.mesh import Mesh1D, Mesh2D
from hdgml.models.system import LocalElementOperator, PoissonSystem, SkeletonSystem
from hdgml.services.problems import PoissonProblem
from hdgml.services.quadrature import (
    edge_basis,
    edge_mass,
    gauss_legendre,
    gauss_lobatto_nodes,
    monomials,
    triangle_rule,
)

LOCAL_CONDITION_LIMIT = 1e14


@dataclass(frozen=True)
class LocalModel:
    """Coefficients of the element-local mixed problem.

    Helmholtz: flux_mass = scalar_mass = i*kappa, tau = p / (kappa h_T).
    Poisson:   flux_mass = 1, scalar_mass = 0, tau = c / h_T.
    """

    name: str
    flux_mass: complex
    scalar_mass: complex
    tau: float
    kappa: float = 0.0


ModelFactory = Callable[[float, float, int], LocalModel]


def helmholtz_model(kappa: float, h: float, p: int) -> LocalModel:
    if kappa <= 0:
        raise ConfigurationError(f"wave number must be positive, got {kappa}")
    return LocalModel("helmholtz", 1j * kappa, 1j * kappa, p / (kappa * h), kappa)


def poisson_model(kappa: float, h: float, p: int, c: float = 1.0) -> LocalModel:
    return LocalModel("poisson", 1.0, 0.0, c / h, 0.0)


@dataclass
class _ElementGeometry:
    center: np.ndarray
    scale: float
    volume_points: np.ndarray
    volume_weights: np.ndarray
    # per local trace block: points, weights, outward normal, trace basis values
    faces: List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


def volume_rule(p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Reference-triangle rule exact to degree 2p + 2"""
    return triangle_rule(2 * p + 2)


def _triangle_geometry(mesh: Mesh2D, t: int, p: int) -> _ElementGeometry:
    tri = mesh.triangles[t]
    verts = mesh.vertices[tri]
    ref, w = volume_rule(p)
    jac = np.stack([verts[1] - verts[0], verts[2] - verts[0]], axis=1)
    det = abs(np.linalg.det(jac))
    points = verts[0] + ref @ jac.T
    s, ws = gauss_legendre(p + 2)
    psi = edge_basis(p, s)
    faces = []
    for k in range(3):
        start, end = verts[(k + 1) % 3], verts[(k + 2) % 3]
        d = end - start
        length = float(np.hypot(*d))
        normal = np.array([d[1], -d[0]]) / length
        a, b = mesh.vertices[mesh.edges[mesh.triangle_edges[t, k]]]
        x = a + np.outer(0.5 * (1.0 + s), b - a)
        faces.append((x, ws * 0.5 * length, normal, psi))
    return _ElementGeometry(
        center=verts.mean(axis=0),
        scale=mesh.h,
        volume_points=points,
        volume_weights=w * det,
        faces=faces,
    )


def _interval_geometry(mesh: Mesh1D, e: int, p: int) -> _ElementGeometry:
    xl = mesh.a + e * mesh.h
    xr = xl + mesh.h
    s, w = gauss_legendre(p + 2)
    points = (0.5 * (xl + xr) + 0.5 * mesh.h * s)[:, None]
    one = np.ones((1, 1))
    faces = [
        (np.array([[xl]]), np.ones(1), np.array([-1.0]), one),
        (np.array([[xr]]), np.ones(1), np.array([1.0]), one),
    ]
    return _ElementGeometry(
        center=np.array([0.5 * (xl + xr)]),
        scale=mesh.h,
        volume_points=points,
        volume_weights=0.5 * mesh.h * w,
        faces=faces,
    )


def element_basis(center: np.ndarray, scale: float, p: int, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values (npts, N) and physical gradients (dim, npts, N) of the scaled monomial basis"""
    points = np.atleast_2d(points)
    values, grads = monomials((points - center) / scale, p)
    return values, grads / scale


def _local_operator(element: int, geometry: _ElementGeometry, model: LocalModel, p: int) -> LocalElementOperator:
    dim = geometry.center.size
    v, g = element_basis(geometry.center, geometry.scale, p, geometry.volume_points)
    w = geometry.volume_weights
    n = v.shape[1]
    mass = v.T @ (w[:, None] * v)
    coupling = [g[d].T @ (w[:, None] * v) for d in range(dim)]  # (d_phi_i, phi_j)

    blocks = [face[3].shape[1] for face in geometry.faces]
    n_trace = sum(blocks)
    boundary_mass = np.zeros((n, n))
    trace_coupling = np.zeros((n, n_trace))
    normal_coupling = np.zeros((dim, n, n_trace))
    trace_mass = np.zeros((n_trace, n_trace))
    offset = 0
    for (x, wf, normal, psi), size in zip(geometry.faces, blocks):
        vb, _ = element_basis(geometry.center, geometry.scale, p, x)
        cols = slice(offset, offset + size)
        boundary_mass += vb.T @ (wf[:, None] * vb)
        trace_coupling[:, cols] = vb.T @ (wf[:, None] * psi)
        for d in range(dim):
            normal_coupling[d][:, cols] = normal[d] * trace_coupling[:, cols]
        trace_mass[cols, cols] = psi.T @ (wf[:, None] * psi)
        offset += size

    tau = model.tau
    size = (dim + 1) * n
    stiffness = np.zeros((size, size), dtype=complex)
    u = slice(dim * n, size)
    for d in range(dim):
        q = slice(d * n, (d + 1) * n)
        stiffness[q, q] = model.flux_mass * mass
        stiffness[q, u] = -coupling[d]
        stiffness[u, q] = coupling[d].T
    stiffness[u, u] = model.scalar_mass * mass + tau * boundary_mass

    lift = np.vstack([-normal_coupling[d] for d in range(dim)] + [tau * trace_coupling])
    flux = np.hstack([normal_coupling[d].T for d in range(dim)] + [tau * trace_coupling.T])

    try:
        if np.linalg.cond(stiffness) > LOCAL_CONDITION_LIMIT:
            raise np.linalg.LinAlgError("ill-conditioned")
        inverse = scipy.linalg.inv(stiffness)
    except (np.linalg.LinAlgError, ValueError):
        raise SingularLocalProblemError(element, tau)

    trace_solve = inverse @ lift
    source_solve = inverse[:, u]
    return LocalElementOperator(
        element=element,
        p=p,
        dim=dim,
        kappa=model.kappa,
        tau=tau,
        center=geometry.center,
        scale=geometry.scale,
        n_basis=n,
        mass=mass,
        boundary_mass=boundary_mass,
        trace_coupling=trace_coupling,
        trace_mass=trace_mass,
        stiffness=stiffness,
        lift=lift,
        flux=flux,
        trace_solve=trace_solve,
        source_solve=source_solve,
        condensed=-flux @ trace_solve + tau * trace_mass,
        load_map=flux @ source_solve,
    )


def _geometry(mesh: Union[Mesh1D, Mesh2D], element: int, p: int) -> _ElementGeometry:
    if isinstance(mesh, Mesh1D):
        return _interval_geometry(mesh, element, p)
    return _triangle_geometry(mesh, element, p)


def build_local_operator(
    mesh: Union[Mesh1D, Mesh2D],
    element: int,
    p: int,
    model: LocalModel,
) -> LocalElementOperator:
    """Local solver of a single element for the given local model"""
    if p < 1:
        raise ConfigurationError(f"polynomial degree must be >= 1, got {p}")
    return _local_operator(element, _geometry(mesh, element, p), model, p)


def element_dof_map(mesh: Union[Mesh1D, Mesh2D], p: int) -> np.ndarray:
    """Global trace dofs of every element, local blocks in local edge order"""
    if isinstance(mesh, Mesh1D):
        return mesh.cells
    dofs = mesh.triangle_edges[:, :, None] * (p + 1) + np.arange(p + 1)
    return dofs.reshape(mesh.n_triangles, 3 * (p + 1))


def _shape_keys(mesh: Union[Mesh1D, Mesh2D], element_kappa: np.ndarray) -> np.ndarray:
    if isinstance(mesh, Mesh1D):
        return np.round(element_kappa, 10)[:, None]
    verts = mesh.vertices[mesh.triangles]
    offsets = (verts[:, 1:] - verts[:, :1]).reshape(-1, 4) / mesh.h
    return np.column_stack(
        [np.round(offsets, 9), mesh.triangle_edge_signs, np.round(element_kappa, 10)]
    )


def build_local_operators(
    mesh: Union[Mesh1D, Mesh2D],
    p: int,
    model_factory: ModelFactory,
    element_kappa: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[LocalElementOperator]]:
    """Local solvers shared between elements of identical shape, orientation and wave number"""
    n_elements = mesh.n_elements if isinstance(mesh, Mesh1D) else mesh.n_triangles
    if element_kappa is None:
        element_kappa = np.zeros(n_elements)
    keys = _shape_keys(mesh, element_kappa)
    _, first, class_index = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    class_index = np.asarray(class_index).ravel()
    ops = []
    for element in first:
        model = model_factory(float(element_kappa[element]), mesh.h, p)
        ops.append(build_local_operator(mesh, int(element), p, model))
    # np.unique sorts keys; renumber classes by first occurrence for stable output
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(order.size)
    logger.debug(f"Built {len(ops)} local operator classes for {n_elements} elements (p={p})")
    return remap[class_index], [ops[i] for i in order]


def _scatter_blocks(element_dofs: np.ndarray, blocks: np.ndarray, n: int) -> sp.csr_matrix:
    nl = element_dofs.shape[1]
    rows = np.broadcast_to(element_dofs[:, :, None], (element_dofs.shape[0], nl, nl))
    cols = np.broadcast_to(element_dofs[:, None, :], (element_dofs.shape[0], nl, nl))
    return sp.coo_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()


def _edge_block_matrix(mesh: Mesh2D, p: int, weights: np.ndarray, inverse: bool = False) -> sp.csr_matrix:
    """Block-diagonal matrix with weights[e] * (reference edge mass or its inverse) per edge"""
    ref = np.linalg.inv(edge_mass(p)) if inverse else edge_mass(p)
    dofs = mesh.edges.shape[0]
    local = np.arange(dofs)[:, None] * (p + 1) + np.arange(p + 1)
    blocks = weights[:, None, None] * ref[None]
    return _scatter_blocks(local, blocks, dofs * (p + 1))


def skeleton_mass(mesh: Union[Mesh1D, Mesh2D], p: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Skeleton inner product sum_T <., .>_dT and its inverse"""
    if isinstance(mesh, Mesh1D):
        weight = np.bincount(mesh.cells.ravel(), minlength=mesh.n_nodes).astype(float)
        return sp.diags(weight).tocsr(), sp.diags(1.0 / weight).tocsr()
    multiplicity = np.where(mesh.boundary_edges, 1.0, 2.0)
    half = 0.5 * mesh.edge_lengths
    return (
        _edge_block_matrix(mesh, p, multiplicity * half),
        _edge_block_matrix(mesh, p, 1.0 / (multiplicity * half), inverse=True),
    )


def boundary_edge_mass(mesh: Mesh2D, p: int) -> sp.csr_matrix:
    """<lambda, mu> over the domain boundary"""
    weights = np.where(mesh.boundary_edges, 0.5 * mesh.edge_lengths, 0.0)
    return _edge_block_matrix(mesh, p, weights)


def boundary_normals(mesh: Mesh2D) -> np.ndarray:
    """Outward unit normals of the boundary edges (zero rows for interior edges)"""
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    d = b - a
    normal = np.stack([d[:, 1], -d[:, 0]], axis=1) / mesh.edge_lengths[:, None]
    owner = mesh.centroids[mesh.edge_triangles[:, 0]]
    outward = np.einsum("ij,ij->i", normal, 0.5 * (a + b) - owner) > 0
    normal[~outward] *= -1.0
    normal[~mesh.boundary_edges] = 0.0
    return normal


def _element_sources(
    mesh: Mesh2D,
    p: int,
    source: Optional[Callable],
    class_index: np.ndarray,
    ops: List[LocalElementOperator],
) -> np.ndarray:
    n_basis = ops[0].n_basis
    sources = np.zeros((mesh.n_triangles, n_basis), dtype=complex)
    if source is None:
        return sources
    ref, w = volume_rule(p)
    verts = mesh.vertices[mesh.triangles]
    for cls, op in enumerate(ops):
        elements = np.flatnonzero(class_index == cls)
        rep = verts[op.element]
        jac = np.stack([rep[1] - rep[0], rep[2] - rep[0]], axis=1)
        weights = w * abs(np.linalg.det(jac))
        offsets = ref @ jac.T
        values, _ = element_basis(op.center, op.scale, p, rep[0] + offsets)
        points = verts[elements, 0][:, None, :] + offsets[None]
        f = np.asarray(source(points[..., 0], points[..., 1]), dtype=complex)
        f = np.broadcast_to(f, points.shape[:2])
        sources[elements] = (f * weights) @ values
    return sources


def _boundary_load(mesh: Mesh2D, p: int, boundary: Optional[Callable]) -> np.ndarray:
    load = np.zeros(mesh.n_edges * (p + 1), dtype=complex)
    if boundary is None:
        return load
    edges = np.flatnonzero(mesh.boundary_edges)
    s, ws = gauss_legendre(p + 4)
    psi = edge_basis(p, s)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    x = a[:, None, :] + 0.5 * (1.0 + s)[None, :, None] * (b - a)[:, None, :]
    normal = boundary_normals(mesh)[edges]
    g = boundary(
        x[..., 0],
        x[..., 1],
        np.broadcast_to(normal[:, :1], x.shape[:2]),
        np.broadcast_to(normal[:, 1:], x.shape[:2]),
    )
    g = np.broadcast_to(np.asarray(g, dtype=complex), x.shape[:2])
    weights = ws[None, :] * 0.5 * mesh.edge_lengths[edges][:, None]
    moments = (g * weights) @ psi
    dofs = edges[:, None] * (p + 1) + np.arange(p + 1)
    load[dofs.ravel()] = moments.ravel()
    return load


def _scatter_vectors(element_dofs: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    np.add.at(out, element_dofs.ravel(), values.ravel())
    return out


def _element_loads(system_ops, class_index, sources) -> np.ndarray:
    loads = np.zeros((class_index.size, system_ops[0].n_trace), dtype=complex)
    for cls, op in enumerate(system_ops):
        elements = np.flatnonzero(class_index == cls)
        loads[elements] = sources[elements] @ op.load_map.T
    return loads


def _stack_condensed(ops: List[LocalElementOperator], class_index: np.ndarray) -> np.ndarray:
    return np.stack([op.condensed for op in ops])[class_index]


def assemble_condensed(mesh: Mesh2D, problem, p: int, level: Optional[int] = None) -> SkeletonSystem:
    """Condensed Helmholtz skeleton system of a 2D mesh.

    `problem` provides kappa_at(x, y), and optionally source(x, y) and
    boundary(x, y, nx, ny) for the mixed form.
    """
    if p < 1:
        raise ConfigurationError(f"polynomial degree must be >= 1, got {p}")
    centroids = mesh.centroids
    element_kappa = np.broadcast_to(
        np.asarray(problem.kappa_at(centroids[:, 0], centroids[:, 1]), dtype=float),
        (mesh.n_triangles,),
    ).copy()
    class_index, ops = build_local_operators(mesh, p, helmholtz_model, element_kappa)
    element_dofs = element_dof_map(mesh, p)
    n = mesh.n_edges * (p + 1)

    galerkin = _scatter_blocks(element_dofs, _stack_condensed(ops, class_index), n)
    boundary_matrix = boundary_edge_mass(mesh, p)
    stiffness = (galerkin + boundary_matrix).tocsr()

    sources = _element_sources(mesh, p, getattr(problem, "source", None), class_index, ops)
    boundary_load = _boundary_load(mesh, p, getattr(problem, "boundary", None))
    load = _scatter_vectors(element_dofs, _element_loads(ops, class_index, sources), n) + boundary_load

    mass, mass_inverse = skeleton_mass(mesh, p)
    operator = (mass_inverse @ stiffness).tocsr()
    logger.info(
        f"Assembled Helmholtz skeleton system level {mesh.level if level is None else level}: "
        f"{n} dofs, {stiffness.nnz} nonzeros"
    )
    return SkeletonSystem(
        level=mesh.level if level is None else level,
        p=p,
        mesh=mesh,
        stiffness=stiffness,
        mass=mass,
        mass_inverse=mass_inverse,
        operator=operator,
        load=load,
        rhs=mass_inverse @ load,
        element_dofs=element_dofs,
        class_index=class_index,
        local_ops=ops,
        element_sources=sources,
        element_kappa=element_kappa,
        boundary_matrix=boundary_matrix,
        boundary_load=boundary_load,
        kind="helmholtz",
    )


def boundary_interpolant(mesh: Mesh2D, p: int, func: Callable) -> np.ndarray:
    """GLL nodal values of func(x, y) on every edge"""
    s = gauss_lobatto_nodes(p)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    x = a[:, None, :] + 0.5 * (1.0 + s)[None, :, None] * (b - a)[:, None, :]
    values = np.broadcast_to(np.asarray(func(x[..., 0], x[..., 1])), x.shape[:2])
    return values.reshape(-1)


def assemble_poisson(
    mesh: Mesh2D,
    p: int,
    problem: Optional[PoissonProblem] = None,
    c: float = 1.0,
) -> PoissonSystem:
    """Condensed Poisson system on the trace space with zero boundary values.

    Without a problem the load is zero. Non-homogeneous Dirichlet data of the
    problem is moved to the right-hand side.
    """
    source = problem.source if problem is not None else None
    dirichlet = problem.dirichlet if problem is not None else None
    class_index, ops = build_local_operators(
        mesh, p, lambda kappa, h, deg: poisson_model(kappa, h, deg, c)
    )
    element_dofs = element_dof_map(mesh, p)
    n = mesh.n_edges * (p + 1)
    full = _scatter_blocks(element_dofs, _stack_condensed(ops, class_index), n)
    full = (0.5 * (full + full.T)).real.tocsr()

    boundary = np.zeros(n, dtype=bool)
    boundary_edges = np.flatnonzero(mesh.boundary_edges)
    boundary[(boundary_edges[:, None] * (p + 1) + np.arange(p + 1)).ravel()] = True
    interior = np.flatnonzero(~boundary)

    sources = _element_sources(mesh, p, source, class_index, ops)
    load = _scatter_vectors(element_dofs, _element_loads(ops, class_index, sources), n)
    if dirichlet is not None:
        g = np.where(boundary, boundary_interpolant(mesh, p, dirichlet), 0.0)
        load = load - full @ g

    full_mass, full_inverse = skeleton_mass(mesh, p)
    stiffness = full[interior][:, interior].tocsr()
    mass = full_mass[interior][:, interior].tocsr()
    # edge blocks never mix interior and boundary dofs
    mass_inverse = full_inverse[interior][:, interior].tocsr()
    interior_load = load[interior]
    if np.allclose(interior_load.imag, 0.0):
        interior_load = interior_load.real
    logger.info(f"Assembled Poisson skeleton system level {mesh.level}: {interior.size} interior dofs")
    return PoissonSystem(
        level=mesh.level,
        p=p,
        mesh=mesh,
        stiffness=stiffness,
        mass=mass,
        mass_inverse=mass_inverse,
        operator=(mass_inverse @ stiffness).tocsr(),
        load=interior_load,
        rhs=mass_inverse @ interior_load,
        element_dofs=element_dofs,
        class_index=class_index,
        local_ops=ops,
        element_sources=sources,
        interior=interior,
        kind="poisson",
        full_stiffness=full,
        full_mass=full_mass,
        full_mass_inverse=full_inverse,
    )


def assemble_condensed_1d(
    mesh: Mesh1D,
    kappa: float,
    p: int = 1,
    boundary_condition: str = "dirichlet",
    source: Optional[Callable] = None,
) -> SkeletonSystem:
    """Condensed 1D Helmholtz system; the trace lives on the mesh nodes.

    "dirichlet" eliminates both end nodes (homogeneous data), "periodic" requires a
    periodic mesh and gives a circulant operator.
    """
    if boundary_condition not in ("dirichlet", "periodic"):
        raise ConfigurationError(f"unknown boundary condition {boundary_condition!r}")
    if (boundary_condition == "periodic") != mesh.periodic:
        raise ConfigurationError("periodic boundary condition needs a periodic mesh and vice versa")
    element_kappa = np.full(mesh.n_elements, float(kappa))
    class_index, ops = build_local_operators(mesh, p, helmholtz_model, element_kappa)
    element_dofs = mesh.cells
    n = mesh.n_nodes
    full = _scatter_blocks(element_dofs, _stack_condensed(ops, class_index), n)

    sources = np.zeros((mesh.n_elements, ops[0].n_basis), dtype=complex)
    if source is not None:
        op = ops[0]
        s, w = gauss_legendre(p + 3)
        for e in range(mesh.n_elements):
            x = mesh.a + (e + 0.5 + 0.5 * s) * mesh.h
            values, _ = element_basis(np.array([mesh.a + (e + 0.5) * mesh.h]), op.scale, p, x[:, None])
            f = np.broadcast_to(np.asarray(source(x), dtype=complex), x.shape)
            sources[e] = (f * w * 0.5 * mesh.h) @ values
    load = _scatter_vectors(element_dofs, _element_loads(ops, class_index, sources), n)

    full_mass, full_inverse = skeleton_mass(mesh, p)
    interior = None
    stiffness, mass, mass_inverse = full, full_mass, full_inverse
    if boundary_condition == "dirichlet":
        interior = np.arange(1, n - 1)
        stiffness = full[interior][:, interior].tocsr()
        mass = full_mass[interior][:, interior].tocsr()
        mass_inverse = full_inverse[interior][:, interior].tocsr()
        load = load[interior]
    return SkeletonSystem(
        level=mesh.level,
        p=p,
        mesh=mesh,
        stiffness=stiffness,
        mass=mass,
        mass_inverse=mass_inverse,
        operator=(mass_inverse @ stiffness).tocsr(),
        load=load,
        rhs=mass_inverse @ load,
        element_dofs=element_dofs,
        class_index=class_index,
        local_ops=ops,
        element_sources=sources,
        element_kappa=element_kappa,
        interior=interior,
        kind="helmholtz",
    )


def solve_condensed(system: SkeletonSystem) -> np.ndarray:
    """Direct solve of the skeleton system (reference solution)"""
    return spla.spsolve(system.stiffness.tocsc(), system.load)


def recover_interior(system: SkeletonSystem, trace: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Element fields (Q: (n_el, dim, N), U: (n_el, N)) from a skeleton solution"""
    trace = system.extend(trace)
    n_el = system.element_dofs.shape[0]
    dim = system.dim
    n_basis = system.local_ops[0].n_basis
    q = np.zeros((n_el, dim, n_basis), dtype=complex)
    u = np.zeros((n_el, n_basis), dtype=complex)
    for cls, op in enumerate(system.local_ops):
        elements = np.flatnonzero(system.class_index == cls)
        lam = trace[system.element_dofs[elements]].T
        src = None if system.element_sources is None else system.element_sources[elements].T
        qe, ue = op.solve(lam, src)
        q[elements] = np.moveaxis(qe, -1, 0)
        u[elements] = ue.T
    return q, u


def flux_moments(system: SkeletonSystem, trace: np.ndarray) -> np.ndarray:
    """Moments of the numerical normal flux against every local trace function (n_el, n_local)"""
    trace = system.extend(trace)
    q, u = recover_interior(system, trace)
    out = np.zeros(system.element_dofs.shape, dtype=complex)
    for cls, op in enumerate(system.local_ops):
        elements = np.flatnonzero(system.class_index == cls)
        fields = np.concatenate([q[elements].reshape(elements.size, -1), u[elements]], axis=1).T
        lam = trace[system.element_dofs[elements]].T
        out[elements] = op.flux_moments(fields, lam).T
    return out


def evaluate_scalar(system: SkeletonSystem, u: np.ndarray, element: int, points: np.ndarray) -> np.ndarray:
    """Value of the element field U at physical points of one element"""
    op = system.local_ops[system.class_index[element]]
    if system.dim == 1:
        mesh = system.mesh
        center = np.array([mesh.a + (element + 0.5) * mesh.h])
    else:
        center = system.mesh.centroids[element]
    values, _ = element_basis(center, op.scale, system.p, np.atleast_2d(points))
    return values @ u[element]


def assemble_full_system(system: SkeletonSystem) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Uncondensed system in the unknowns [element fields..., trace] (2D Helmholtz only)"""
    if system.kind != "helmholtz" or system.dim != 2:
        raise ConfigurationError("the full system is available for 2D Helmholtz systems only")
    n_el = system.element_dofs.shape[0]
    block = system.local_ops[0].stiffness.shape[0]
    n_trace = system.n_dofs
    offset = n_el * block
    rows, cols, data = [], [], []
    rhs = np.zeros(offset + n_trace, dtype=complex)
    for e in range(n_el):
        op = system.local_ops[system.class_index[e]]
        local = e * block + np.arange(block)
        dofs = offset + system.element_dofs[e]
        r, c = np.meshgrid(local, local, indexing="ij")
        rows.append(r.ravel()); cols.append(c.ravel()); data.append(op.stiffness.ravel())
        r, c = np.meshgrid(local, dofs, indexing="ij")
        rows.append(r.ravel()); cols.append(c.ravel()); data.append(-op.lift.ravel())
        r, c = np.meshgrid(dofs, local, indexing="ij")
        rows.append(r.ravel()); cols.append(c.ravel()); data.append(-op.flux.ravel())
        r, c = np.meshgrid(dofs, dofs, indexing="ij")
        rows.append(r.ravel()); cols.append(c.ravel()); data.append((op.tau * op.trace_mass).ravel())
        rhs[local[-op.n_basis :]] = system.element_sources[e]
    boundary = system.boundary_matrix.tocoo()
    rows.append(offset + boundary.row); cols.append(offset + boundary.col); data.append(boundary.data)
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(offset + n_trace, offset + n_trace),
    ).tocsr()
    rhs[offset:] = system.boundary_load
    return matrix, rhs


def solve_full_system(system: SkeletonSystem) -> Tuple[np.ndarray, np.ndarray]:
    """Solve the uncondensed system; returns (trace, element field coefficients)"""
    matrix, rhs = assemble_full_system(system)
    x = spla.spsolve(matrix.tocsc(), rhs)
    offset = x.size - system.n_dofs
    return x[offset:], x[:offset].reshape(system.element_dofs.shape[0], -1)


def trace_error(system: SkeletonSystem, trace: np.ndarray, exact: Callable) -> float:
    """L2 norm over the skeleton of (trace - exact), every edge counted once"""
    if system.dim != 2:
        raise ConfigurationError("trace_error is defined for 2D meshes")
    mesh = system.mesh
    p = system.p
    trace = system.extend(trace).reshape(mesh.n_edges, p + 1)
    s, ws = gauss_legendre(p + 4)
    psi = edge_basis(p, s)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    x = a[:, None, :] + 0.5 * (1.0 + s)[None, :, None] * (b - a)[:, None, :]
    diff = trace @ psi.T - exact(x[..., 0], x[..., 1])
    weights = ws[None, :] * 0.5 * mesh.edge_lengths[:, None]
    return float(np.sqrt(np.sum(weights * np.abs(diff) ** 2)))


def export_system(system: SkeletonSystem, directory: Union[str, Path]) -> Path:
    """Write stiffness, mass and operator (Matrix Market) and the load vector (CSV)"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mmwrite(str(directory / f"stiffness_{system.level}.mtx"), system.stiffness)
    mmwrite(str(directory / f"mass_{system.level}.mtx"), system.mass)
    mmwrite(str(directory / f"operator_{system.level}.mtx"), system.operator)
    load = np.asarray(system.load, dtype=complex)
    pd.DataFrame({"real": load.real, "imag": load.imag}).to_csv(
        directory / f"load_{system.level}.csv", index_label="dof", lineterminator="\n"
    )
    logger.info(f"Exported level {system.level} system to {directory}")
    return directory
