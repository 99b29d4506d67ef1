from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from loguru import logger

from hdgml.core.config import settings
from hdgml.core.exceptions import ConfigurationError, NumericalError, SingularLevelError

Operator = Union[sp.spmatrix, np.ndarray, spla.LinearOperator, Callable[[np.ndarray], np.ndarray]]

REORTHOGONALIZATION_THRESHOLD = 1e-8


def _as_callable(op: Operator) -> Callable[[np.ndarray], np.ndarray]:
    if op is None:
        return lambda v: v
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return lambda v: op @ v
    if isinstance(op, spla.LinearOperator):
        return op.matvec
    if callable(op):
        return op
    raise ConfigurationError(f"cannot apply operator of type {type(op).__name__}")


def _lu_solve(factor, real_factor: bool, b: np.ndarray) -> np.ndarray:
    if real_factor and np.iscomplexobj(b):
        return factor.solve(np.ascontiguousarray(b.real)) + 1j * factor.solve(np.ascontiguousarray(b.imag))
    return factor.solve(b)


def check_finite(v: np.ndarray, what: str, level: Optional[int] = None):
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite values in {what}", level=level)


@dataclass
class GmresState:
    """Arnoldi vectors, Hessenberg matrix and residual history of a GMRES run"""

    basis: List[np.ndarray]
    hessenberg: np.ndarray
    residuals: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def _givens(a: complex, b: complex) -> Tuple[float, complex]:
    """c real, s complex with [c s; -conj(s) c] [a; b] = [r; 0]"""
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, 1.0
    denom = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    c = abs(a) / denom
    s = a * np.conj(b) / (abs(a) * denom)
    return c, s


def gmres(
    A: Operator,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    max_steps: int = 50,
    tol: float = 0.0,
    precond: Optional[Operator] = None,
    side: str = "left",
    level: Optional[int] = None,
) -> Tuple[np.ndarray, GmresState]:
    """Unrestarted GMRES with modified Gram-Schmidt and complex Givens rotations.

    Stops after max_steps or once ||r_k|| <= tol ||r_0||; with left preconditioning the
    preconditioned residual is monitored. tol=0 runs all steps.
    """
    if side not in ("left", "right"):
        raise ConfigurationError(f"unknown preconditioning side {side!r}")
    if max_steps < 0:
        raise ConfigurationError(f"max_steps must be >= 0, got {max_steps}")
    apply_a = _as_callable(A)
    apply_m = _as_callable(precond)
    b = np.asarray(b)
    dtype = np.result_type(b, np.complex128)
    x0 = np.zeros(b.shape[0], dtype=dtype) if x0 is None else np.asarray(x0, dtype=dtype)

    r0 = b - apply_a(x0)
    if side == "left" and precond is not None:
        r0 = apply_m(r0)
    check_finite(r0, "initial residual", level)
    beta = float(np.linalg.norm(r0))
    hessenberg = np.zeros((max_steps + 1, max_steps), dtype=dtype)
    state = GmresState(basis=[], hessenberg=hessenberg, residuals=[beta])
    if beta == 0.0 or max_steps == 0:
        state.converged = beta == 0.0
        return x0, state

    basis = [r0 / beta]
    rotated = np.zeros_like(hessenberg)
    cs = np.zeros(max_steps)
    sn = np.zeros(max_steps, dtype=dtype)
    g = np.zeros(max_steps + 1, dtype=dtype)
    g[0] = beta
    k = 0
    for k in range(max_steps):
        v = basis[k]
        if side == "left":
            w = apply_m(apply_a(v))
        else:
            w = apply_a(apply_m(v))
        check_finite(w, "Krylov vector", level)

        for i in range(k + 1):
            h = np.vdot(basis[i], w)
            hessenberg[i, k] = h
            w = w - h * basis[i]
        norm_w = float(np.linalg.norm(w))
        if norm_w > 0.0:
            overlap = np.array([np.vdot(u, w) for u in basis])
            if np.max(np.abs(overlap)) > REORTHOGONALIZATION_THRESHOLD * norm_w:
                hessenberg[: k + 1, k] += overlap
                for u, c in zip(basis, overlap):
                    w = w - c * u
                norm_w = float(np.linalg.norm(w))
        hessenberg[k + 1, k] = norm_w

        column = hessenberg[: k + 2, k].copy()
        for i in range(k):
            temp = cs[i] * column[i] + sn[i] * column[i + 1]
            column[i + 1] = -np.conj(sn[i]) * column[i] + cs[i] * column[i + 1]
            column[i] = temp
        cs[k], sn[k] = _givens(column[k], column[k + 1])
        column[k] = cs[k] * column[k] + sn[k] * column[k + 1]
        column[k + 1] = 0.0
        rotated[: k + 2, k] = column
        g[k + 1] = -np.conj(sn[k]) * g[k]
        g[k] = cs[k] * g[k]

        residual = float(abs(g[k + 1]))
        state.residuals.append(residual)
        breakdown = norm_w <= 1e-14 * beta
        if not breakdown:
            basis.append(w / norm_w)
        if breakdown or residual <= tol * beta:
            state.converged = True
            break

    steps = k + 1
    y = scipy.linalg.solve_triangular(rotated[:steps, :steps], g[:steps])
    update = np.zeros_like(x0)
    for u, c in zip(basis[:steps], y):
        update += c * u
    if side == "right":
        update = apply_m(update)
    x = x0 + update
    check_finite(x, "GMRES iterate", level)
    state.iterations = steps
    state.basis = basis
    state.hessenberg = hessenberg[: steps + 1, :steps]
    return x, state


def weighted_jacobi_sweep(
    A: sp.spmatrix, b: np.ndarray, x: np.ndarray, omega: float = None, steps: int = 1
) -> np.ndarray:
    """x <- x + omega D^{-1} (b - A x), repeated `steps` times"""
    omega = settings.DEFAULT_OMEGA if omega is None else omega
    if not 0.0 < omega <= 1.0:
        raise ConfigurationError(f"relaxation weight must lie in (0, 1], got {omega}")
    diagonal = A.diagonal()
    zero = np.flatnonzero(diagonal == 0)
    if zero.size:
        raise NumericalError(f"zero diagonal entry at dof {zero[0]}", index=int(zero[0]))
    x = np.array(x, dtype=np.result_type(x, A.dtype, b))
    for _ in range(steps):
        x = x + omega * (b - A @ x) / diagonal
    return x


class GaussSeidel:
    """Forward Gauss-Seidel in natural dof order; the lower triangle is factored once"""

    def __init__(self, A: sp.spmatrix, level: Optional[int] = None):
        self.A = sp.csr_matrix(A)
        self.level = level
        diagonal = self.A.diagonal()
        zero = np.flatnonzero(diagonal == 0)
        if zero.size:
            raise NumericalError(f"zero diagonal entry at dof {zero[0]}", level=level, index=int(zero[0]))
        self.upper = sp.triu(self.A, k=1, format="csr")
        lower = sp.tril(self.A, format="csc")
        self.factor = spla.splu(lower, permc_spec="NATURAL", diag_pivot_thresh=0.0)

    def sweep(self, b: np.ndarray, x: np.ndarray, steps: int = 1) -> np.ndarray:
        x = np.asarray(x, dtype=np.result_type(x, self.A.dtype, b))
        for _ in range(steps):
            x = _lu_solve(self.factor, not np.iscomplexobj(self.A.data), b - self.upper @ x)
        return x


def gauss_seidel_sweep(A: sp.spmatrix, b: np.ndarray, x: np.ndarray, steps: int = 1) -> np.ndarray:
    return GaussSeidel(A).sweep(b, x, steps)


class DirectSolver:
    """Cached sparse LU factorization"""

    def __init__(self, A: sp.spmatrix, level: Optional[int] = None, check_residual: bool = False):
        self.A = sp.csc_matrix(A)
        self.level = level
        self.check_residual = check_residual
        try:
            self.factor = spla.splu(self.A)
        except RuntimeError as e:
            raise SingularLevelError(level, f"({e})")

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = _lu_solve(self.factor, not np.iscomplexobj(self.A.data), np.asarray(b, dtype=np.result_type(b, self.A.dtype)))
        check_finite(x, "direct solve", self.level)
        if self.check_residual:
            norm_b = np.linalg.norm(b)
            if norm_b > 0:
                relative = np.linalg.norm(self.A @ x - b) / norm_b
                if relative > 1e-10:
                    logger.warning(f"Direct solve residual {relative:.2e} on level {self.level}")
        return x


def direct_solve(A: sp.spmatrix, b: np.ndarray, level: Optional[int] = None) -> np.ndarray:
    return DirectSolver(A, level=level, check_residual=True).solve(b)


class Smoother:
    """Approximate solver R_l: smooth(rhs, steps) returns an approximation of A^{-1} rhs from zero"""

    kind = "base"

    def __init__(self, A: sp.spmatrix, level: Optional[int] = None):
        self.A = A
        self.level = level

    def smooth(self, rhs: np.ndarray, steps: int) -> np.ndarray:
        raise NotImplementedError


class JacobiSmoother(Smoother):
    kind = "weighted-jacobi"

    def __init__(self, A: sp.spmatrix, level: Optional[int] = None, omega: float = None):
        super().__init__(A, level)
        self.omega = settings.DEFAULT_OMEGA if omega is None else omega

    def smooth(self, rhs: np.ndarray, steps: int) -> np.ndarray:
        return weighted_jacobi_sweep(self.A, rhs, np.zeros_like(rhs), self.omega, steps)


class GaussSeidelSmoother(Smoother):
    kind = "gauss-seidel"

    def __init__(self, A: sp.spmatrix, level: Optional[int] = None):
        super().__init__(A, level)
        self.solver = GaussSeidel(A, level)

    def smooth(self, rhs: np.ndarray, steps: int) -> np.ndarray:
        return self.solver.sweep(rhs, np.zeros_like(rhs), steps)


class GmresSmoother(Smoother):
    """`steps` GMRES iterations from a zero initial guess"""

    kind = "gmres-smoother"

    def smooth(self, rhs: np.ndarray, steps: int) -> np.ndarray:
        x, _ = gmres(self.A, rhs, None, max_steps=steps, tol=0.0, level=self.level)
        return x


class DirectSmoother(Smoother):
    kind = "direct"

    def __init__(self, A: sp.spmatrix, level: Optional[int] = None):
        super().__init__(A, level)
        self.solver = DirectSolver(A, level)

    def smooth(self, rhs: np.ndarray, steps: int = 1) -> np.ndarray:
        return self.solver.solve(rhs)


SMOOTHERS = {
    JacobiSmoother.kind: JacobiSmoother,
    GaussSeidelSmoother.kind: GaussSeidelSmoother,
    GmresSmoother.kind: GmresSmoother,
    DirectSmoother.kind: DirectSmoother,
}


def make_smoother(kind: str, A: sp.spmatrix, level: Optional[int] = None, omega: float = None) -> Smoother:
    if kind not in SMOOTHERS:
        raise ConfigurationError(f"unknown smoother {kind!r}; expected one of {sorted(SMOOTHERS)}")
    if kind == JacobiSmoother.kind:
        return JacobiSmoother(A, level, omega)
    return SMOOTHERS[kind](A, level)
