import numpy as np
import pytest
import scipy.sparse.linalg as spla

from hdgml.core.exceptions import ConfigurationError
from hdgml.services.hdg import (
    _triangle_geometry,
    assemble_condensed,
    assemble_condensed_1d,
    assemble_poisson,
    boundary_interpolant,
    build_local_operator,
    evaluate_scalar,
    export_system,
    flux_moments,
    helmholtz_model,
    recover_interior,
    skeleton_mass,
    solve_condensed,
    solve_full_system,
    trace_error,
)
from hdgml.services.mesh import UNIT_SQUARE, build_mesh_1d, build_mesh_2d
from hdgml.services.problems import BesselProblem, PoissonProblem, polynomial_problem, to_mixed_form


@pytest.mark.parametrize("n", [1, 2, 4])
@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("kappa", [1.0, 20.0])
def test_condensed_solve_matches_full_system(n, p, kappa):
    mesh = build_mesh_2d(n, box=(-0.5, 0.5, -0.5, 0.5))
    system = assemble_condensed(mesh, BesselProblem(kappa).to_mixed_form(), p)
    condensed = solve_condensed(system)
    full, _ = solve_full_system(system)
    scale = max(1.0, np.max(np.abs(full)))
    assert np.max(np.abs(condensed - full)) <= 1e-10 * scale


@pytest.mark.parametrize("p", [1, 2, 3])
def test_polynomial_solutions_are_reproduced(p):
    problem = to_mixed_form(polynomial_problem(3.0, p))
    mesh = build_mesh_2d(2, box=UNIT_SQUARE)
    system = assemble_condensed(mesh, problem, p)
    trace = solve_condensed(system)
    expected = boundary_interpolant(mesh, p, problem.exact)
    np.testing.assert_allclose(trace, expected, atol=1e-9)
    assert trace_error(system, trace, problem.exact) < 1e-9

    _, u = recover_interior(system, trace)
    for element in (0, 3, mesh.n_triangles - 1):
        c = mesh.centroids[element]
        value = evaluate_scalar(system, u, element, c)
        assert value[0] == pytest.approx(problem.exact(c[0], c[1]), abs=1e-9)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_element_volume_rule_is_exact_to_degree_2p_plus_2(p):
    # triangle 0 of the single-cell mesh is 0 <= y <= x <= 1
    geometry = _triangle_geometry(build_mesh_2d(1, box=UNIT_SQUARE), 0, p)
    x, y = geometry.volume_points.T
    degree = 2 * p + 2
    for b in range(degree + 1):
        a = degree - b
        exact = 1.0 / ((b + 1) * (a + b + 2))
        assert geometry.volume_weights @ (x ** a * y ** b) == pytest.approx(exact, rel=1e-12)


def test_local_solution_satisfies_local_system():
    mesh = build_mesh_2d(2, box=UNIT_SQUARE)
    op = build_local_operator(mesh, 1, 2, helmholtz_model(7.0, mesh.h, 2))
    rng = np.random.default_rng(0)
    trace = rng.standard_normal(op.n_trace) + 1j * rng.standard_normal(op.n_trace)
    source = rng.standard_normal(op.n_basis)
    q, u = op.solve(trace, source)
    fields = np.concatenate([q.reshape(-1), u])
    np.testing.assert_allclose(op.residual(fields, trace, source), 0.0, atol=1e-10)
    assert op.tau == pytest.approx(2 / (7.0 * mesh.h))


def test_galerkin_matrix_is_complex_symmetric(helmholtz_levels):
    for system in helmholtz_levels:
        k = system.stiffness
        assert abs(k - k.T).max() <= 1e-10 * abs(k).max()


def test_skeleton_mass_and_inverse(unit_mesh):
    mass, inverse = skeleton_mass(unit_mesh, 2)
    ones = np.ones(mass.shape[0])
    # every triangle contributes its perimeter
    perimeters = 8 * (1.0 + np.sqrt(2.0) / 2)
    assert ones @ (mass @ ones) == pytest.approx(perimeters, rel=1e-12)
    np.testing.assert_allclose((inverse @ mass).toarray(), np.eye(mass.shape[0]), atol=1e-10)


def test_operator_and_rhs_are_mass_scaled(helmholtz_levels):
    system = helmholtz_levels[0]
    np.testing.assert_allclose(system.mass @ system.rhs, system.load, atol=1e-12)
    v = np.arange(system.n_dofs, dtype=float)
    np.testing.assert_allclose(system.mass @ (system.operator @ v), system.stiffness @ v, atol=1e-9)


def test_numerical_flux_is_conserved(helmholtz_levels):
    system = helmholtz_levels[1]
    trace = solve_condensed(system)
    moments = flux_moments(system, trace)
    assembled = np.zeros(system.n_dofs, dtype=complex)
    np.add.at(assembled, system.element_dofs.ravel(), moments.ravel())
    expected = system.boundary_matrix @ trace - system.boundary_load
    np.testing.assert_allclose(assembled, expected, atol=1e-9)
    interior = ~np.repeat(system.mesh.boundary_edges, system.p + 1)
    np.testing.assert_allclose(assembled[interior], 0.0, atol=1e-9)


def test_poisson_energy_matches_quadratic_form(poisson_pair):
    system = poisson_pair[0]
    rng = np.random.default_rng(11)
    for _ in range(3):
        trace = rng.standard_normal(system.n_dofs)
        quadratic = trace @ (system.stiffness @ trace)
        assert system.energy(trace) == pytest.approx(quadratic, rel=1e-8)
    assert np.all(np.linalg.eigvalsh(system.stiffness.toarray()) > 0)


@pytest.mark.parametrize("p", [2, 3])
def test_poisson_problem_is_reproduced(p):
    problem = PoissonProblem.quadratic()
    mesh = build_mesh_2d(2, box=problem.box)
    system = assemble_poisson(mesh, p, problem)
    trace = spla.spsolve(system.stiffness.tocsc(), system.load)
    expected = boundary_interpolant(mesh, p, problem.exact)
    np.testing.assert_allclose(trace, expected[system.interior].real, atol=1e-9)


def test_poisson_without_problem_has_zero_load(poisson_pair):
    assert not np.any(poisson_pair[0].load)


def test_poisson_energy_rejects_wrong_length(poisson_pair):
    with pytest.raises(ConfigurationError):
        poisson_pair[0].energy(np.ones(3))


def test_periodic_1d_operator_is_circulant():
    mesh = build_mesh_1d(0.0, 8.0, 8, periodic=True)
    system = assemble_condensed_1d(mesh, 0.7, 1, "periodic")
    a = system.operator.toarray()
    n = a.shape[0]
    for i in range(n):
        assert a[i, i] == pytest.approx(a[0, 0], abs=1e-12)
        assert a[i, (i + 1) % n] == pytest.approx(a[0, 1], abs=1e-12)
        assert a[i, (i - 1) % n] == pytest.approx(a[0, 1], abs=1e-12)
    assert np.count_nonzero(np.abs(a[0]) > 1e-12) == 3


def test_dirichlet_1d_system_drops_end_nodes():
    mesh = build_mesh_1d(0.0, 1.0, 10)
    system = assemble_condensed_1d(mesh, 5.0, 1, "dirichlet", source=lambda x: np.ones_like(x))
    assert system.n_dofs == 9
    assert system.interior.tolist() == list(range(1, 10))
    solution = spla.spsolve(system.stiffness.tocsc(), system.load)
    assert np.all(np.isfinite(solution))


def test_1d_boundary_condition_must_match_mesh():
    with pytest.raises(ConfigurationError):
        assemble_condensed_1d(build_mesh_1d(0.0, 1.0, 4), 1.0, 1, "periodic")


def test_local_operators_are_shared_between_congruent_elements(helmholtz_levels):
    system = helmholtz_levels[-1]
    assert len(system.local_ops) <= 2
    assert system.class_index.size == system.mesh.n_triangles


def test_full_system_rejects_poisson(poisson_pair):
    with pytest.raises(ConfigurationError):
        solve_full_system(poisson_pair[0])


def test_export_system(tmp_path, helmholtz_levels):
    system = helmholtz_levels[0]
    export_system(system, tmp_path)
    for name in ("stiffness", "mass", "operator"):
        assert (tmp_path / f"{name}_{system.level}.mtx").exists()
    lines = (tmp_path / f"load_{system.level}.csv").read_text().splitlines()
    assert lines[0] == "dof,real,imag"
    assert len(lines) == system.n_dofs + 1
