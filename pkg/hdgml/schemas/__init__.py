from hdgml.schemas.solver import RelaxationConfig, CyclePlanSettings
from hdgml.schemas.run import (
    RunConfig,
    ProblemConfig,
    MeshConfig,
    SolverConfig,
    LfaConfig,
    StabilityConfig,
)

__all__ = [
    "RelaxationConfig",
    "CyclePlanSettings",
    "RunConfig",
    "ProblemConfig",
    "MeshConfig",
    "SolverConfig",
    "LfaConfig",
    "StabilityConfig",
]
