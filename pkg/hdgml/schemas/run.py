from pydantic import BaseModel, field_validator, model_validator
from typing import List, Literal, Optional, Tuple

from hdgml.core.config import settings
from hdgml.schemas.solver import CyclePlanSettings

RunMode = Literal[
    "solve",
    "lfa-two-level",
    "lfa-three-level",
    "lfa-smoother",
    "lfa-gmres-experiment",
    "stability-check",
]


def _split(v):
    if isinstance(v, str):
        return [item.strip() for item in v.split(",") if item.strip()]
    if isinstance(v, (int, float)):
        return [v]
    return v


class ProblemConfig(BaseModel):
    kind: Literal["bessel", "cave", "plane-wave"] = "bessel"
    kappa: float = 50.0
    p: int = 1
    q1: float = 3.0
    q2: float = 2.0
    middle: Tuple[float, float, float, float] = (-0.25, 0.25, -0.25, 0.25)
    inner: Tuple[float, float, float, float] = (-0.125, 0.125, -0.125, 0.125)
    direction: Tuple[float, float] = (1.0, 0.0)

    @field_validator("middle", "inner", "direction", mode="before")
    @classmethod
    def split_tuple(cls, v):
        return _split(v)

    @field_validator("kappa", "q1", "q2")
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @field_validator("p")
    @classmethod
    def validate_degree(cls, v):
        if not 1 <= v <= 4:
            raise ValueError("polynomial degree must lie in 1..4")
        return v


class MeshConfig(BaseModel):
    n0: Optional[int] = None
    coarse_ratio: Optional[float] = None
    levels: List[int] = [1]
    box: Tuple[float, float, float, float] = (-0.5, 0.5, -0.5, 0.5)

    @field_validator("levels", "box", mode="before")
    @classmethod
    def split_list(cls, v):
        return _split(v)

    @field_validator("n0")
    @classmethod
    def validate_n0(cls, v):
        if v is not None and v < 1:
            raise ValueError("n0 must be >= 1")
        return v

    @field_validator("coarse_ratio")
    @classmethod
    def validate_coarse_ratio(cls, v):
        if v is not None and v <= 0:
            raise ValueError("coarse_ratio must be positive")
        return v

    @field_validator("levels")
    @classmethod
    def validate_levels(cls, v):
        if not v or any(level < 1 for level in v):
            raise ValueError("levels must be a non-empty list of counts >= 1")
        return v


class SolverConfig(CyclePlanSettings):
    tol: float = settings.PGMRES_TOL
    max_iter: int = settings.PGMRES_MAX_ITER

    @field_validator("mu", mode="before")
    @classmethod
    def split_mu(cls, v):
        values = _split(v)
        if isinstance(values, list) and len(values) == 1:
            return values[0]
        return values

    @field_validator("tol")
    @classmethod
    def validate_tol(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("tol must lie in (0, 1)")
        return v

    @field_validator("max_iter")
    @classmethod
    def validate_max_iter(cls, v):
        if v < 1:
            raise ValueError("max_iter must be >= 1")
        return v


class LfaConfig(BaseModel):
    t: List[float] = [0.1, 0.5, 1.0]
    samples: int = settings.LFA_SAMPLES
    smoother: Literal["jacobi", "gauss-seidel", "gmres"] = "jacobi"
    omega: float = settings.DEFAULT_OMEGA
    mu: List[float] = [0.5, 0.5, 0.5]
    restriction: Literal["mass-weighted", "full-weighting"] = "mass-weighted"
    kappa: float = 200.0
    h: float = 0.005
    domain: Tuple[float, float] = (0.0, 10.0)
    steps: int = 1
    norm: Literal["iterate", "residual"] = "iterate"

    @field_validator("t", "mu", "domain", mode="before")
    @classmethod
    def split_list(cls, v):
        return _split(v)

    @field_validator("t")
    @classmethod
    def validate_t(cls, v):
        if not v or any(t <= 0 for t in v):
            raise ValueError("t values must be positive")
        return v

    @field_validator("samples", "steps")
    @classmethod
    def validate_count(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("omega")
    @classmethod
    def validate_omega(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        return v


class StabilityConfig(BaseModel):
    p: List[int] = [1, 2, 3]
    n0: List[int] = [2, 4]
    gap: int = 1
    trials: int = 20
    power_iterations: int = 500

    @field_validator("p", "n0", mode="before")
    @classmethod
    def split_list(cls, v):
        return _split(v)

    @field_validator("gap", "trials", "power_iterations")
    @classmethod
    def validate_count(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v


class RunConfig(BaseModel):
    mode: RunMode
    seed: int = settings.RANDOM_SEED
    threads: int = settings.THREADS
    record_timing: bool = False
    export_systems: bool = False
    problem: ProblemConfig = ProblemConfig()
    mesh: MeshConfig = MeshConfig()
    solver: SolverConfig = SolverConfig()
    lfa: LfaConfig = LfaConfig()
    stability: StabilityConfig = StabilityConfig()

    @model_validator(mode="after")
    def validate_mode(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.mode == "lfa-gmres-experiment":
            if self.lfa.domain[1] <= self.lfa.domain[0]:
                raise ValueError("lfa domain must satisfy a < b")
            if self.lfa.h <= 0 or self.lfa.h >= self.lfa.domain[1] - self.lfa.domain[0]:
                raise ValueError("lfa h must be positive and smaller than the domain")
        elif self.mode.startswith("lfa-") and self.lfa.smoother == "gmres":
            raise ValueError(f"the gmres smoother has no Fourier symbol (mode {self.mode})")
        if self.mode == "lfa-two-level" and len(self.lfa.mu) < 2:
            raise ValueError("lfa-two-level needs two damping factors mu = mu0, mu1")
        if self.mode == "lfa-three-level" and len(self.lfa.mu) < 3:
            raise ValueError("lfa-three-level needs three damping factors mu = mu0, mu1, mu2")
        return self
