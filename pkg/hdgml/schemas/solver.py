from pydantic import BaseModel, field_validator
from typing import List, Literal, Union

from hdgml.core.config import settings


class RelaxationConfig(BaseModel):
    kind: Literal["weighted-jacobi", "gauss-seidel", "gmres-smoother"] = "gauss-seidel"
    omega: float = settings.DEFAULT_OMEGA
    steps: int = settings.DEFAULT_SMOOTHING_STEPS

    @field_validator("omega")
    @classmethod
    def validate_omega(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        return v

    @field_validator("steps")
    @classmethod
    def validate_steps(cls, v):
        if v < 1:
            raise ValueError("steps must be >= 1")
        return v


class CyclePlanSettings(BaseModel):
    """Parameters of the multilevel cycle"""

    alpha: float = settings.DEFAULT_ALPHA
    mu: Union[float, List[float]] = settings.DEFAULT_MU
    m1: int = settings.DEFAULT_SMOOTHING_STEPS  # GMRES smoother, down sweep
    m2: int = settings.DEFAULT_SMOOTHING_STEPS  # linear smoother, down sweep
    m3: int = settings.DEFAULT_SMOOTHING_STEPS  # linear smoother, up sweep
    m4: int = settings.DEFAULT_SMOOTHING_STEPS  # GMRES smoother, up sweep
    linear_smoother: Literal["gauss-seidel", "weighted-jacobi"] = "gauss-seidel"
    omega: float = settings.DEFAULT_OMEGA
    post_sweep: bool = True
    preconditioning: Literal["left", "right"] = "left"
    transfer_mode: Literal["direct", "composed"] = "direct"

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v):
        if v <= 0:
            raise ValueError("alpha must be positive")
        return v

    @field_validator("mu")
    @classmethod
    def validate_mu(cls, v):
        values = v if isinstance(v, list) else [v]
        if not values or any(not 0.0 < m <= 1.0 for m in values):
            raise ValueError("mu must lie in (0, 1]")
        return v

    @field_validator("m1", "m2", "m3", "m4")
    @classmethod
    def validate_steps(cls, v):
        if v < 1:
            raise ValueError("smoothing steps must be >= 1")
        return v

    @field_validator("omega")
    @classmethod
    def validate_omega(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        return v

    def mu_at(self, level: int) -> float:
        if isinstance(self.mu, list):
            return self.mu[min(level, len(self.mu) - 1)]
        return self.mu

    def relaxation(self, sweep: Literal["down", "up"], gmres_smoothing: bool) -> RelaxationConfig:
        """Smoother of one sweep on a level: m1/m4 GMRES steps or m2/m3 linear steps"""
        if sweep not in ("down", "up"):
            raise ValueError(f"sweep must be 'down' or 'up', got {sweep!r}")
        down = sweep == "down"
        if gmres_smoothing:
            return RelaxationConfig(kind="gmres-smoother", omega=self.omega, steps=self.m1 if down else self.m4)
        return RelaxationConfig(kind=self.linear_smoother, omega=self.omega, steps=self.m2 if down else self.m3)
