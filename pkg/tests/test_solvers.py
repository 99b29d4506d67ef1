import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from hdgml.core.exceptions import ConfigurationError, NumericalError, SingularLevelError
from hdgml.services.solvers import (
    DirectSolver,
    GaussSeidel,
    check_finite,
    direct_solve,
    gmres,
    make_smoother,
    weighted_jacobi_sweep,
)


def _random_system(n=30, seed=0, complex_=True):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) / np.sqrt(n) + 3.0 * np.eye(n)
    b = rng.standard_normal(n)
    if complex_:
        A = A + 1j * rng.standard_normal((n, n)) / np.sqrt(n)
        b = b + 1j * rng.standard_normal(n)
    return A, b


def _diagonally_dominant(n=12, seed=1):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, (n, n))
    A += np.diag(np.abs(A).sum(axis=1) + 1.0)
    return sp.csr_matrix(A)


def test_gmres_solves_complex_system():
    A, b = _random_system()
    x, state = gmres(A, b, max_steps=30, tol=1e-12)
    assert state.converged
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-8, atol=1e-10)


def test_gmres_residuals_do_not_increase():
    A, b = _random_system(seed=3)
    _, state = gmres(A, b, max_steps=20, tol=0.0)
    history = np.array(state.residuals)
    assert len(history) == 21
    assert np.all(np.diff(history) <= 1e-12 * history[0])


def test_gmres_residual_history_matches_true_residuals():
    A, b = _random_system(seed=4)
    for steps in (1, 5, 10):
        x, state = gmres(A, b, max_steps=steps, tol=0.0)
        assert np.linalg.norm(b - A @ x) == pytest.approx(state.residuals[-1], rel=1e-8)


@hyp_settings(max_examples=15, deadline=None)
@given(
    scale=st.floats(min_value=0.1, max_value=10.0),
    phase=st.floats(min_value=0.0, max_value=2 * np.pi),
)
def test_gmres_is_scale_equivariant(scale, phase):
    A, b = _random_system(n=15, seed=7)
    c = scale * np.exp(1j * phase)
    x, _ = gmres(A, b, max_steps=15, tol=1e-13)
    y, _ = gmres(A, c * b, max_steps=15, tol=1e-13)
    np.testing.assert_allclose(y, c * x, rtol=1e-8, atol=1e-10)


def test_right_preconditioning_gives_same_solution():
    A, b = _random_system(seed=5)
    inverse_diagonal = 1.0 / np.diag(A)
    precond = lambda v: inverse_diagonal * v  # noqa: E731
    left, left_state = gmres(A, b, max_steps=30, tol=1e-12, precond=precond, side="left")
    right, right_state = gmres(A, b, max_steps=30, tol=1e-12, precond=precond, side="right")
    assert left_state.converged and right_state.converged
    np.testing.assert_allclose(left, right, rtol=1e-8, atol=1e-10)


def test_gmres_edge_cases():
    A, b = _random_system(n=5)
    x, state = gmres(A, np.zeros(5), max_steps=5)
    assert state.converged and state.residuals == [0.0]
    assert not np.any(x)
    x0 = np.ones(5)
    x, state = gmres(A, b, x0=x0, max_steps=0)
    np.testing.assert_array_equal(x, x0)
    with pytest.raises(ConfigurationError):
        gmres(A, b, side="top")
    with pytest.raises(ConfigurationError):
        gmres(A, b, max_steps=-1)


def test_gmres_reports_non_finite_operators():
    A, b = _random_system(n=4)
    with pytest.raises(NumericalError):
        gmres(lambda v: np.full_like(v, np.nan), b, max_steps=3)


def test_jacobi_and_gauss_seidel_fix_the_solution():
    A = _diagonally_dominant()
    b = np.arange(1.0, A.shape[0] + 1.0)
    exact = np.linalg.solve(A.toarray(), b)
    np.testing.assert_allclose(weighted_jacobi_sweep(A, b, exact, omega=0.6, steps=3), exact, atol=1e-12)
    np.testing.assert_allclose(GaussSeidel(A).sweep(b, exact, steps=3), exact, atol=1e-12)


def test_smoothers_converge_on_diagonally_dominant_matrix():
    A = _diagonally_dominant()
    b = np.ones(A.shape[0])
    exact = np.linalg.solve(A.toarray(), b)
    x = weighted_jacobi_sweep(A, b, np.zeros_like(b), omega=0.6, steps=400)
    np.testing.assert_allclose(x, exact, atol=1e-8)
    x = GaussSeidel(A).sweep(b, np.zeros_like(b), steps=400)
    np.testing.assert_allclose(x, exact, atol=1e-8)


def test_gauss_seidel_sweep_is_forward_substitution():
    A = _diagonally_dominant(seed=9)
    dense = A.toarray()
    rng = np.random.default_rng(2)
    b = rng.standard_normal(A.shape[0]) + 1j * rng.standard_normal(A.shape[0])
    x0 = rng.standard_normal(A.shape[0])
    expected = np.linalg.solve(np.tril(dense), b - np.triu(dense, k=1) @ x0)
    np.testing.assert_allclose(GaussSeidel(A).sweep(b, x0), expected, atol=1e-12)


def test_smoother_factory():
    A = _diagonally_dominant()
    b = np.ones(A.shape[0])
    for kind in ("weighted-jacobi", "gauss-seidel", "gmres-smoother", "direct"):
        smoother = make_smoother(kind, A, level=1, omega=0.6)
        assert smoother.kind == kind
        assert smoother.smooth(b, 2).shape == b.shape
    exact = np.linalg.solve(A.toarray(), b)
    np.testing.assert_allclose(make_smoother("gmres-smoother", A).smooth(b, A.shape[0]), exact, atol=1e-10)
    np.testing.assert_allclose(make_smoother("direct", A).smooth(b), exact, atol=1e-12)
    with pytest.raises(ConfigurationError):
        make_smoother("sor", A)


def test_invalid_relaxation_weight():
    A = _diagonally_dominant()
    with pytest.raises(ConfigurationError):
        weighted_jacobi_sweep(A, np.ones(A.shape[0]), np.zeros(A.shape[0]), omega=1.5)


def test_zero_diagonal_is_reported():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NumericalError) as info:
        weighted_jacobi_sweep(A, np.ones(2), np.zeros(2))
    assert info.value.index == 0
    with pytest.raises(NumericalError):
        GaussSeidel(A, level=2)


def test_singular_level_is_reported():
    A = sp.csc_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularLevelError) as info:
        DirectSolver(A, level=0)
    assert info.value.level == 0


def test_direct_solve_complex_rhs_with_real_matrix():
    A = _diagonally_dominant()
    b = np.ones(A.shape[0]) + 2j * np.arange(A.shape[0])
    np.testing.assert_allclose(A @ direct_solve(A, b), b, atol=1e-10)


def test_check_finite():
    check_finite(np.ones(3), "vector")
    with pytest.raises(NumericalError) as info:
        check_finite(np.array([1.0, np.nan]), "vector", level=3)
    assert info.value.level == 3
    assert "level 3" in str(info.value)
