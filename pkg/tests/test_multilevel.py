import numpy as np
import pytest

from hdgml.core.exceptions import ConfigurationError
from hdgml.models.system import LevelStack
from hdgml.schemas.solver import CyclePlanSettings
from hdgml.services.hdg import solve_condensed
from hdgml.services.mesh import CENTERED_SQUARE, build_hierarchy_1d, build_hierarchy_2d
from hdgml.services.multilevel import (
    build_level_stack,
    build_level_stack_1d,
    cycle,
    iteration_matrix,
    make_plan,
    pgmres_solve,
    stack_mesh_sizes,
    stationary_solve,
)
from hdgml.services.problems import BesselProblem, CaveConfig, cave_subdomains, cells_for_ratio, coarsest_cells
from hdgml.services.solvers import make_smoother

LINEAR = dict(alpha=float("inf"), linear_smoother="weighted-jacobi", m2=2, m3=3, omega=0.6, mu=0.5)


@pytest.fixture(scope="module")
def periodic_stack():
    return build_level_stack_1d(build_hierarchy_1d(0.0, 1.0, 8, 3, periodic=True), kappa=3.0)


def _plan(stack, kappa=3.0, p=1, **overrides):
    return make_plan(CyclePlanSettings(**overrides), kappa, p, stack_mesh_sizes(stack))


def test_plan_switches_on_kappa_h():
    plan = make_plan(CyclePlanSettings(alpha=0.5, m1=3, m2=2, m3=4, m4=5), 50.0, 1, [0.1, 0.05, 0.005])
    assert plan.n_levels == 2
    assert plan[0].pre_kind == "direct" and plan[0].post_kind == "direct"
    assert (plan[1].pre_kind, plan[1].pre_steps, plan[1].post_steps) == ("gmres-smoother", 3, 5)
    assert (plan[2].pre_kind, plan[2].pre_steps, plan[2].post_steps) == ("gauss-seidel", 2, 4)
    assert plan[1].kappa_h == pytest.approx(2.5)
    assert plan[2].kappa_h == pytest.approx(0.25)


def test_plan_uses_per_level_damping():
    plan = make_plan(CyclePlanSettings(mu=[1.0, 0.5, 0.25]), 1.0, 1, [0.5, 0.25, 0.125, 0.0625])
    assert [entry.mu for entry in plan.levels] == [1.0, 0.5, 0.25, 0.25]


def test_plan_degree_scales_the_switch():
    sizes = [0.1, 0.02]
    assert make_plan(CyclePlanSettings(alpha=0.5), 40.0, 1, sizes)[1].pre_kind == "gmres-smoother"
    assert make_plan(CyclePlanSettings(alpha=0.5), 40.0, 2, sizes)[1].pre_kind == "gauss-seidel"


def test_cycle_keeps_an_exact_solution(periodic_stack):
    plan = _plan(periodic_stack, alpha=0.1)
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(periodic_stack.finest.n_dofs) + 1j * rng.standard_normal(periodic_stack.finest.n_dofs)
    rhs = periodic_stack.finest.operator @ v0
    np.testing.assert_array_equal(cycle(periodic_stack, plan, v0, rhs), v0)


def test_cycle_rejects_mismatched_plan(periodic_stack):
    plan = make_plan(CyclePlanSettings(), 3.0, 1, [0.125, 0.0625])
    with pytest.raises(ConfigurationError):
        cycle(periodic_stack, plan, np.zeros(periodic_stack.finest.n_dofs), periodic_stack.finest.rhs)


def test_level_stack_checks_transfer_shapes(periodic_stack):
    with pytest.raises(ConfigurationError):
        LevelStack(systems=periodic_stack.systems, transfers=periodic_stack.transfers[:-1])
    with pytest.raises(ConfigurationError):
        LevelStack(systems=[], transfers=[])


def _correction_matrix(stack, plan, level, kind, steps):
    system = stack.systems[level]
    smoother = make_smoother(kind, system.operator, level, plan.omega)
    eye = np.eye(system.n_dofs, dtype=complex)
    R = np.stack([smoother.smooth(eye[:, j], steps) for j in range(system.n_dofs)], axis=1)
    transfer = stack.transfers[level]
    A = stack.finest.operator.toarray()
    n = stack.finest.n_dofs
    return np.eye(n) - plan[level].mu * transfer.matrix.toarray() @ R @ transfer.adjoint.toarray() @ A


@pytest.mark.parametrize("post_sweep", [False, True])
def test_iteration_matrix_is_the_product_of_corrections(periodic_stack, post_sweep):
    plan = _plan(periodic_stack, post_sweep=post_sweep, **LINEAR)
    expected = _correction_matrix(periodic_stack, plan, 0, "direct", 1)
    for level in range(1, len(plan.levels)):
        expected = _correction_matrix(periodic_stack, plan, level, plan[level].pre_kind, plan[level].pre_steps) @ expected
    if post_sweep:
        for level in range(len(plan.levels) - 1, 0, -1):
            expected = (
                _correction_matrix(periodic_stack, plan, level, plan[level].post_kind, plan[level].post_steps)
                @ expected
            )
        expected = _correction_matrix(periodic_stack, plan, 0, "direct", 1) @ expected
    np.testing.assert_allclose(iteration_matrix(periodic_stack, plan), expected, atol=1e-10)


def test_single_level_preconditioner_is_exact():
    stack = build_level_stack_1d(build_hierarchy_1d(0.0, 1.0, 16, 1, periodic=True), kappa=3.0)
    rhs = np.random.default_rng(1).standard_normal(stack.finest.n_dofs)
    result = pgmres_solve(stack, _plan(stack), rhs=rhs, tol=1e-10)
    assert result.converged
    assert result.iterations == 1
    np.testing.assert_allclose(stack.finest.operator @ result.solution, rhs, atol=1e-9)


def test_stationary_solve_history():
    stack = build_level_stack_1d(build_hierarchy_1d(0.0, 1.0, 16, 1, periodic=True), kappa=3.0)
    rhs = np.random.default_rng(2).standard_normal(stack.finest.n_dofs)
    result = stationary_solve(stack, _plan(stack, mu=1.0), rhs=rhs, tol=1e-8, max_iter=5)
    assert result.history[0] == pytest.approx(1.0)
    assert len(result.history) == result.iterations + 1
    assert result.converged and result.iterations == 1


def test_stationary_solve_respects_max_iter(periodic_stack):
    rhs = np.ones(periodic_stack.finest.n_dofs)
    result = stationary_solve(periodic_stack, _plan(periodic_stack, **LINEAR), rhs=rhs, tol=1e-14, max_iter=3)
    assert result.history[0] == pytest.approx(1.0)
    assert result.iterations <= 3
    assert len(result.history) == result.iterations + 1


@pytest.mark.parametrize("side", ["left", "right"])
def test_pgmres_matches_direct_solve(small_hierarchy, bessel_problem, side):
    stack = build_level_stack(bessel_problem, small_hierarchy, 1)
    plan = _plan(stack, kappa=5.0, alpha=float("inf"), preconditioning=side)
    result = pgmres_solve(stack, plan, tol=1e-10, max_iter=stack.finest.n_dofs)
    assert result.converged
    assert result.level == 2 and result.n_dofs == stack.finest.n_dofs
    reference = solve_condensed(stack.finest)
    assert np.linalg.norm(result.solution - reference) <= 1e-6 * np.linalg.norm(reference)
    assert result.history[0] == 1.0
    assert result.history[-1] <= 1e-10


def test_pgmres_with_gmres_smoothing_converges(small_hierarchy, bessel_problem):
    stack = build_level_stack(bessel_problem, small_hierarchy, 2)
    result = pgmres_solve(stack, _plan(stack, kappa=5.0, p=2, alpha=0.1), tol=1e-6, max_iter=100)
    assert result.converged
    assert result.iterations < 100


def _full_size_iterations(kappa, p, levels, **overrides):
    n0 = coarsest_cells(kappa, p)
    stack = build_level_stack(BesselProblem(kappa).to_mixed_form(), build_hierarchy_2d(n0, levels, CENTERED_SQUARE), p)
    result = pgmres_solve(stack, _plan(stack, kappa=kappa, p=p, **overrides), tol=1e-6, max_iter=300)
    assert result.converged
    return stack.finest.n_dofs, result.iterations


@pytest.mark.slow
def test_iteration_counts_p1_kappa50():
    dofs, iterations = _full_size_iterations(50.0, 1, 4)
    assert dofs == 98816
    assert 14 <= iterations <= 26


@pytest.mark.slow
def test_iteration_counts_p2_kappa50():
    dofs, iterations = _full_size_iterations(50.0, 2, 4)
    assert dofs == 37248
    assert 8 <= iterations <= 15


@pytest.mark.slow
def test_smoothing_steps_reduce_iterations_p2_kappa100():
    counts = []
    for m in (1, 2, 3):
        dofs, iterations = _full_size_iterations(100.0, 2, 4, m1=m, m2=m, m3=m, m4=m)
        assert dofs == 148224
        counts.append(iterations)
    assert counts[0] > counts[1] > counts[2]
    for count, reference in zip(counts, (30, 18, 15)):
        assert 0.7 * reference <= count <= 1.3 * reference


def _cave_iterations(q1, levels, kappa3=100.0, p=2):
    cave = CaveConfig(kappa3=kappa3, q1=q1, q2=2.0)
    hierarchy = build_hierarchy_2d(cells_for_ratio(kappa3, p, 2.95), levels, CENTERED_SQUARE)
    cave_subdomains(cave, hierarchy.coarsest)
    stack = build_level_stack(cave.to_mixed_form(), hierarchy, p)
    result = pgmres_solve(stack, _plan(stack, kappa=kappa3, p=p), tol=1e-6, max_iter=300)
    assert result.converged
    return result.iterations


@pytest.mark.slow
def test_cave_iterations_are_robust_across_levels():
    coarse, fine = (_cave_iterations(3.0, levels) for levels in (2, 3))
    assert abs(fine - coarse) <= 0.3 * coarse


@pytest.mark.slow
def test_cave_with_large_contrast_converges():
    assert _cave_iterations(10.0, 2) > 0
