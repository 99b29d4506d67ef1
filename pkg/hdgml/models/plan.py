from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


@dataclass(frozen=True)
class LevelPlan:
    """Smoother selection of a single level; level 0 is always a direct solve"""

    level: int
    mu: float
    pre_kind: str
    pre_steps: int
    post_kind: str
    post_steps: int
    kappa_h: float = 0.0


@dataclass(frozen=True)
class CyclePlan:
    levels: List[LevelPlan]
    omega: float = 0.6
    post_sweep: bool = True
    preconditioning: str = "left"

    @property
    def n_levels(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, level: int) -> LevelPlan:
        return self.levels[level]


@dataclass
class SolveResult:
    solution: np.ndarray
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)
    seconds: float = 0.0
    n_dofs: int = 0
    level: Optional[int] = None
    initial_residual: float = 1.0
