import time
from typing import Callable, List, Optional, Sequence

import numpy as np
from loguru import logger

from hdgml.core.config import settings
from hdgml.core.exceptions import ConfigurationError
from hdgml.models.mesh import MeshHierarchy
from hdgml.models.plan import CyclePlan, LevelPlan, SolveResult
from hdgml.models.system import LevelStack
from hdgml.schemas.solver import CyclePlanSettings
from hdgml.services.hdg import assemble_condensed, assemble_condensed_1d
from hdgml.services.solvers import check_finite, gmres, make_smoother
from hdgml.services.transfer import build_level_transfers


def make_plan(
    plan_settings: CyclePlanSettings,
    kappa: float,
    p: int,
    mesh_sizes: Sequence[float],
) -> CyclePlan:
    """Per-level smoother choice: GMRES where kappa h_l / p >= alpha, the linear smoother elsewhere"""
    levels = [
        LevelPlan(
            level=0,
            mu=plan_settings.mu_at(0),
            pre_kind="direct",
            pre_steps=1,
            post_kind="direct",
            post_steps=1,
            kappa_h=kappa * mesh_sizes[0] / p,
        )
    ]
    for level, h in enumerate(mesh_sizes[1:], start=1):
        ratio = kappa * h / p
        gmres_smoothing = ratio >= plan_settings.alpha
        pre = plan_settings.relaxation("down", gmres_smoothing)
        post = plan_settings.relaxation("up", gmres_smoothing)
        levels.append(
            LevelPlan(
                level=level,
                mu=plan_settings.mu_at(level),
                pre_kind=pre.kind,
                pre_steps=pre.steps,
                post_kind=post.kind,
                post_steps=post.steps,
                kappa_h=ratio,
            )
        )
    plan = CyclePlan(
        levels=levels,
        omega=plan_settings.omega,
        post_sweep=plan_settings.post_sweep,
        preconditioning=plan_settings.preconditioning,
    )
    for entry in levels[1:]:
        logger.debug(
            f"Level {entry.level}: kappa*h/p={entry.kappa_h:.3f}, "
            f"down {entry.pre_kind} x{entry.pre_steps}, up {entry.post_kind} x{entry.post_steps}"
        )
    return plan


def stack_mesh_sizes(stack: LevelStack) -> List[float]:
    return [system.mesh.h for system in stack.systems]


def build_level_stack(problem, hierarchy: MeshHierarchy, p: int, transfer_mode: str = "direct") -> LevelStack:
    """Assemble every level of a 2D hierarchy together with the transfers to the finest level"""
    start = time.time()
    systems = [assemble_condensed(mesh, problem, p, level=level) for level, mesh in enumerate(hierarchy.meshes)]
    transfers = build_level_transfers(systems, transfer_mode)
    stack = LevelStack(systems=systems, transfers=transfers)
    logger.info(
        f"Level stack ready: {len(systems)} levels, {stack.finest.n_dofs} finest dofs "
        f"({time.time() - start:.2f}s)"
    )
    return stack


def build_level_stack_1d(
    hierarchy: MeshHierarchy,
    kappa: float,
    p: int = 1,
    boundary_condition: str = "periodic",
    transfer_mode: str = "direct",
) -> LevelStack:
    systems = [
        assemble_condensed_1d(mesh, kappa, p, boundary_condition) for mesh in hierarchy.meshes
    ]
    return LevelStack(systems=systems, transfers=build_level_transfers(systems, transfer_mode))


def _smoother(stack: LevelStack, level: int, kind: str, omega: float):
    key = (level, kind, omega)
    if key not in stack.smoothers:
        stack.smoothers[key] = make_smoother(kind, stack.systems[level].operator, level, omega)
    return stack.smoothers[key]


def _check_plan(stack: LevelStack, plan: CyclePlan):
    if len(plan.levels) != len(stack.systems):
        raise ConfigurationError(
            f"plan has {len(plan.levels)} levels but the stack has {len(stack.systems)}"
        )


def cycle(stack: LevelStack, plan: CyclePlan, v0: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """One multilevel cycle for A_L v = rhs starting from v0.

    Every level correction restricts the current finest residual, applies the level
    smoother from zero and prolongs the damped correction back. Order: direct coarse
    solve, levels 1..L, then (post_sweep) levels L..1 and a final coarse solve.
    """
    _check_plan(stack, plan)
    operator = stack.finest.operator
    v = np.array(v0, dtype=np.result_type(v0, rhs, operator.dtype))

    def correct(v: np.ndarray, level: int, kind: str, steps: int) -> np.ndarray:
        residual = rhs - operator @ v
        check_finite(residual, "residual", level)
        transfer = stack.transfers[level]
        restricted = transfer.restrict(residual)
        correction = _smoother(stack, level, kind, plan.omega).smooth(restricted, steps)
        return v + plan[level].mu * transfer.prolong(correction)

    v = correct(v, 0, "direct", 1)
    for level in range(1, len(plan.levels)):
        entry = plan[level]
        v = correct(v, level, entry.pre_kind, entry.pre_steps)
    if plan.post_sweep:
        for level in range(len(plan.levels) - 1, 0, -1):
            entry = plan[level]
            v = correct(v, level, entry.post_kind, entry.post_steps)
        v = correct(v, 0, "direct", 1)
    return v


def preconditioner(stack: LevelStack, plan: CyclePlan) -> Callable[[np.ndarray], np.ndarray]:
    """B(r) = one cycle from zero for right-hand side r"""

    def apply(r: np.ndarray) -> np.ndarray:
        return cycle(stack, plan, np.zeros_like(r, dtype=complex), r)

    return apply


def pgmres_solve(
    stack: LevelStack,
    plan: CyclePlan,
    rhs: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
) -> SolveResult:
    """GMRES on the finest operator preconditioned by one multilevel cycle per iteration"""
    tol = settings.PGMRES_TOL if tol is None else tol
    max_iter = settings.PGMRES_MAX_ITER if max_iter is None else max_iter
    rhs = stack.finest.rhs if rhs is None else rhs
    start = time.time()
    x, state = gmres(
        stack.finest.operator,
        rhs,
        x0,
        max_steps=max_iter,
        tol=tol,
        precond=preconditioner(stack, plan),
        side=plan.preconditioning,
        level=stack.n_levels,
    )
    seconds = time.time() - start
    history = [r / state.residuals[0] for r in state.residuals] if state.residuals[0] > 0 else [0.0]
    if state.converged:
        logger.info(
            f"PGMRES converged in {state.iterations} iterations ({stack.finest.n_dofs} dofs, {seconds:.2f}s)"
        )
    else:
        logger.warning(f"PGMRES stopped after {state.iterations} iterations without reaching tol={tol:g}")
    return SolveResult(
        solution=x,
        iterations=state.iterations,
        converged=state.converged,
        history=history,
        seconds=seconds,
        n_dofs=stack.finest.n_dofs,
        level=stack.n_levels,
        initial_residual=float(state.residuals[0]),
    )


def stationary_solve(
    stack: LevelStack,
    plan: CyclePlan,
    rhs: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: int = 100,
) -> SolveResult:
    """Repeated cycles v <- cycle(v); stops on ||rhs - A v|| <= tol ||rhs||"""
    tol = settings.PGMRES_TOL if tol is None else tol
    rhs = stack.finest.rhs if rhs is None else rhs
    operator = stack.finest.operator
    v = np.zeros(stack.finest.n_dofs, dtype=complex)
    norm = float(np.linalg.norm(rhs)) or 1.0
    history = [float(np.linalg.norm(rhs - operator @ v)) / norm]
    start = time.time()
    iterations = 0
    while iterations < max_iter and history[-1] > tol:
        v = cycle(stack, plan, v, rhs)
        iterations += 1
        history.append(float(np.linalg.norm(rhs - operator @ v)) / norm)
    return SolveResult(
        solution=v,
        iterations=iterations,
        converged=history[-1] <= tol,
        history=history,
        seconds=time.time() - start,
        n_dofs=stack.finest.n_dofs,
        level=stack.n_levels,
        initial_residual=history[0] * norm,
    )


def iteration_matrix(stack: LevelStack, plan: CyclePlan) -> np.ndarray:
    """Dense error propagation matrix of one cycle (small problems only).

    Only meaningful for plans without GMRES smoothers, which make the cycle nonlinear.
    """
    n = stack.finest.n_dofs
    if n > 5000:
        raise ConfigurationError(f"iteration matrix requested for {n} dofs")
    zero = np.zeros(n, dtype=complex)
    columns = [cycle(stack, plan, np.eye(n, dtype=complex)[:, j], zero) for j in range(n)]
    return np.stack(columns, axis=1)
