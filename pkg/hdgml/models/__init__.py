from hdgml.models.mesh import Mesh1D, Mesh2D, MeshHierarchy
from hdgml.models.system import (
    LocalElementOperator,
    SkeletonSystem,
    PoissonSystem,
    TransferOperator,
    LevelStack,
)
from hdgml.models.plan import LevelPlan, CyclePlan, SolveResult
from hdgml.models.symbols import StencilSymbol, HarmonicPair, TwoLevelSymbol, ThreeLevelSymbol

__all__ = [
    "Mesh1D",
    "Mesh2D",
    "MeshHierarchy",
    "LocalElementOperator",
    "SkeletonSystem",
    "PoissonSystem",
    "TransferOperator",
    "LevelStack",
    "LevelPlan",
    "CyclePlan",
    "SolveResult",
    "StencilSymbol",
    "HarmonicPair",
    "TwoLevelSymbol",
    "ThreeLevelSymbol",
]
