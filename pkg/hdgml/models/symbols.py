from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class StencilSymbol:
    """Three-point stencil [s1, s0, s1] of the 1D periodic HDG-P1 operator at t = kappa*h"""

    t: float
    s0: complex
    s1: complex
    source: str = "closed-form"
    closed_form: Optional[Tuple[complex, complex]] = None
    oracle: Optional[Tuple[complex, complex]] = None

    def symbol(self, theta):
        """A~(theta) = 2 s1 cos(theta) + s0"""
        return 2.0 * self.s1 * np.cos(theta) + self.s0


@dataclass(frozen=True)
class HarmonicPair:
    theta0: float
    theta1: float

    @property
    def thetas(self) -> np.ndarray:
        return np.array([self.theta0, self.theta1])


@dataclass(frozen=True)
class TwoLevelSymbol:
    t: float
    theta0: float
    matrix: np.ndarray
    spectral_radius: float
    resonant: bool = False


@dataclass(frozen=True)
class ThreeLevelSymbol:
    t: float
    theta0: float
    matrix: np.ndarray
    spectral_radius: float
    resonant: bool = False
