from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from hdgml.core.exceptions import ConfigurationError
from hdgml.models.mesh import Mesh1D, Mesh2D


@dataclass(eq=False)
class LocalElementOperator:
    """Element-local HDG solver: maps a trace (and source) to the element fields.

    Unknowns are ordered [Q_x, Q_y, U] (just [Q, U] in 1D), each block expanded in
    the element's scaled monomial basis of size n_basis.
    """

    element: int
    p: int
    dim: int
    kappa: float
    tau: float
    center: np.ndarray
    scale: float
    n_basis: int
    mass: np.ndarray
    boundary_mass: np.ndarray
    trace_coupling: np.ndarray
    trace_mass: np.ndarray
    stiffness: np.ndarray
    lift: np.ndarray
    flux: np.ndarray
    trace_solve: np.ndarray
    source_solve: np.ndarray
    condensed: np.ndarray
    load_map: np.ndarray

    @property
    def n_trace(self) -> int:
        return self.trace_mass.shape[0]

    def solve(self, trace: np.ndarray, source: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Return (Q, U) coefficients for trace coefficients (and optional source moments)"""
        x = self.trace_solve @ trace
        if source is not None:
            x = x + self.source_solve @ source
        n = self.n_basis
        q = x[: self.dim * n].reshape((self.dim, n) + x.shape[1:])
        u = x[self.dim * n :]
        return q, u

    def residual(self, fields: np.ndarray, trace: np.ndarray, source: Optional[np.ndarray] = None) -> np.ndarray:
        """Residual of the local saddle system for stacked coefficients [Q; U]"""
        rhs = self.lift @ trace
        if source is not None:
            rhs = rhs.astype(complex)
            rhs[self.dim * self.n_basis :] += source
        return self.stiffness @ fields - rhs

    def flux_moments(self, fields: np.ndarray, trace: np.ndarray) -> np.ndarray:
        """Moments <q_hat . n, psi> of the numerical flux against every local trace function"""
        return self.flux @ fields - self.tau * (self.trace_mass @ trace)


@dataclass(eq=False)
class SkeletonSystem:
    """Condensed skeleton system of one level.

    stiffness is the Galerkin matrix of the condensed form, mass the block-diagonal
    skeleton inner product and operator = mass^{-1} stiffness the map A_l of the
    multilevel method. rhs = mass^{-1} load.
    """

    level: int
    p: int
    mesh: Union[Mesh1D, Mesh2D]
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    mass_inverse: sp.csr_matrix
    operator: sp.csr_matrix
    load: np.ndarray
    rhs: np.ndarray
    element_dofs: np.ndarray
    class_index: np.ndarray
    local_ops: List[LocalElementOperator]
    element_sources: Optional[np.ndarray] = None
    element_kappa: Optional[np.ndarray] = None
    interior: Optional[np.ndarray] = None
    boundary_matrix: Optional[sp.csr_matrix] = None
    boundary_load: Optional[np.ndarray] = None
    kind: str = "helmholtz"

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.mesh, Mesh1D) else 2

    @property
    def n_full(self) -> int:
        """Size of the trace space before boundary dofs are eliminated"""
        if self.interior is None:
            return self.n_dofs
        return int(self.element_dofs.max()) + 1

    def extend(self, values: np.ndarray) -> np.ndarray:
        """Zero-pad coefficients of the active dofs to the full trace space"""
        if self.interior is None:
            return np.asarray(values)
        full = np.zeros(self.n_full, dtype=np.result_type(values, float))
        full[self.interior] = values
        return full

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        """Skeleton inner product <a, b>_h (conjugate-linear in b)"""
        return complex(np.vdot(b, self.mass @ a))


@dataclass(eq=False)
class PoissonSystem(SkeletonSystem):
    """Condensed Poisson system on the zero-boundary trace space.

    full_stiffness keeps every trace dof; stiffness/mass/operator are restricted to
    the interior dofs listed in `interior`.
    """

    full_stiffness: Optional[sp.csr_matrix] = None
    full_mass: Optional[sp.csr_matrix] = None
    full_mass_inverse: Optional[sp.csr_matrix] = None

    def energy(self, trace: np.ndarray) -> float:
        """sum_T (Q, Q)_T + tau <U - trace, U - trace>_dT for the local solutions of the trace"""
        trace = np.asarray(trace, dtype=float)
        if trace.shape[0] == self.interior.size and trace.shape[0] != self.n_full:
            trace = self.extend(trace)
        if trace.shape[0] != self.n_full:
            raise ConfigurationError(f"trace has {trace.shape[0]} entries, expected {self.n_full}")
        total = 0.0
        for cls, op in enumerate(self.local_ops):
            elements = np.flatnonzero(self.class_index == cls)
            if elements.size == 0:
                continue
            lam = trace[self.element_dofs[elements]].T
            q, u = op.solve(lam)
            q = np.real(q)
            u = np.real(u)
            for d in range(op.dim):
                total += np.einsum("ie,ij,je->", q[d], op.mass, q[d])
            jump = (
                np.einsum("ie,ij,je->", u, op.boundary_mass, u)
                - 2.0 * np.einsum("ie,ik,ke->", u, op.trace_coupling, lam)
                + np.einsum("ke,kl,le->", lam, op.trace_mass, lam)
            )
            total += op.tau * jump
        return float(total)


@dataclass(eq=False)
class TransferOperator:
    """Prolongation I_l from level l to the finest level and its restriction Q_l"""

    level: int
    matrix: sp.csr_matrix
    adjoint: sp.csr_matrix
    mode: str = "direct"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def prolong(self, coarse: np.ndarray) -> np.ndarray:
        return self.matrix @ coarse

    def restrict(self, fine: np.ndarray) -> np.ndarray:
        return self.adjoint @ fine


@dataclass(eq=False)
class LevelStack:
    """Systems of every level together with the transfers to the finest level"""

    systems: List[SkeletonSystem]
    transfers: List[TransferOperator]
    smoothers: Dict[Tuple[int, str, Any], Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.systems:
            raise ConfigurationError("a level stack needs at least one level")
        if len(self.systems) != len(self.transfers):
            raise ConfigurationError(
                f"{len(self.systems)} systems but {len(self.transfers)} transfers"
            )
        n_fine = self.systems[-1].n_dofs
        for level, (system, transfer) in enumerate(zip(self.systems, self.transfers)):
            if transfer.shape != (n_fine, system.n_dofs):
                raise ConfigurationError(
                    f"transfer of level {level} has shape {transfer.shape}, "
                    f"expected ({n_fine}, {system.n_dofs})"
                )
            if transfer.adjoint.shape != (system.n_dofs, n_fine):
                raise ConfigurationError(f"restriction of level {level} has shape {transfer.adjoint.shape}")

    @property
    def finest(self) -> SkeletonSystem:
        return self.systems[-1]

    @property
    def n_levels(self) -> int:
        return len(self.systems) - 1

    def __len__(self) -> int:
        return len(self.systems)
