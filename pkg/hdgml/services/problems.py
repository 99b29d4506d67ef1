from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from hdgml.core.exceptions import ConfigurationError
from hdgml.models.mesh import Mesh2D
from hdgml.services.bessel import bessel_j0, bessel_j1
from hdgml.services.mesh import CENTERED_SQUARE

Box = Tuple[float, float, float, float]
KappaField = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass
class HelmholtzProblem:
    """Mixed-form Helmholtz data: i kappa q + grad u = 0, i kappa u + div q = f, -q.n + u = g.

    kappa may be a constant or a piecewise-constant callable of (x, y).
    """

    kappa: KappaField
    source: Optional[Callable] = None
    boundary: Optional[Callable] = None
    exact: Optional[Callable] = None
    box: Box = CENTERED_SQUARE
    name: str = "helmholtz"
    kappa_max: float = 0.0

    def __post_init__(self):
        if not callable(self.kappa):
            if self.kappa <= 0:
                raise ConfigurationError(f"wave number must be positive, got {self.kappa}")
            self.kappa_max = float(self.kappa)
        elif self.kappa_max <= 0:
            raise ConfigurationError("a variable wave number needs kappa_max")

    def kappa_at(self, x, y) -> np.ndarray:
        if callable(self.kappa):
            return np.asarray(self.kappa(x, y), dtype=float)
        return np.full(np.shape(x), float(self.kappa))


@dataclass
class SecondOrderProblem:
    """-Laplace(u) - kappa^2 u = f in the box, du/dn + i kappa u = g on its boundary"""

    kappa: KappaField
    source: Optional[Callable] = None
    boundary: Optional[Callable] = None
    exact: Optional[Callable] = None
    box: Box = CENTERED_SQUARE
    name: str = "second-order"
    kappa_max: float = 0.0

    def kappa_at(self, x, y) -> np.ndarray:
        if callable(self.kappa):
            return np.asarray(self.kappa(x, y), dtype=float)
        return np.full(np.shape(x), float(self.kappa))


def to_mixed_form(problem: SecondOrderProblem) -> HelmholtzProblem:
    """Divide the data by i kappa to obtain the mixed-form source and Robin data"""
    source = None
    boundary = None
    if problem.source is not None:
        def source(x, y, _f=problem.source):
            return _f(x, y) / (1j * problem.kappa_at(x, y))
    if problem.boundary is not None:
        def boundary(x, y, nx, ny, _g=problem.boundary):
            return _g(x, y, nx, ny) / (1j * problem.kappa_at(x, y))
    kappa_max = problem.kappa_max if callable(problem.kappa) else float(problem.kappa)
    return HelmholtzProblem(
        kappa=problem.kappa,
        source=source,
        boundary=boundary,
        exact=problem.exact,
        box=problem.box,
        name=problem.name,
        kappa_max=kappa_max,
    )


@dataclass
class BesselProblem:
    """Radial solution u = cos(kappa r)/kappa - C J0(kappa r) of the Robin problem on a box"""

    kappa: float
    box: Box = CENTERED_SQUARE
    constant: complex = field(init=False)

    def __post_init__(self):
        if self.kappa <= 0:
            raise ConfigurationError(f"wave number must be positive, got {self.kappa}")
        k = self.kappa
        self.constant = (np.cos(k) + 1j * np.sin(k)) / (k * (bessel_j0(k) + 1j * bessel_j1(k)))

    def exact(self, x, y) -> np.ndarray:
        r = np.hypot(x, y)
        return np.cos(self.kappa * r) / self.kappa - self.constant * bessel_j0(self.kappa * r)

    def radial_derivative(self, r) -> np.ndarray:
        k = self.kappa
        return -np.sin(k * r) + self.constant * k * bessel_j1(k * r)

    def source(self, x, y) -> np.ndarray:
        """sin(kappa r)/r, equal to kappa at the origin"""
        r = np.hypot(x, y)
        return self.kappa * np.sinc(self.kappa * r / np.pi)

    def boundary(self, x, y, nx, ny) -> np.ndarray:
        r = np.hypot(x, y)
        safe = np.where(r > 0, r, 1.0)
        dudn = np.where(r > 0, self.radial_derivative(r) * (x * nx + y * ny) / safe, 0.0)
        return dudn + 1j * self.kappa * self.exact(x, y)

    def second_order(self) -> SecondOrderProblem:
        return SecondOrderProblem(
            kappa=self.kappa,
            source=self.source,
            boundary=self.boundary,
            exact=self.exact,
            box=self.box,
            name=f"bessel-k{self.kappa:g}",
        )

    def to_mixed_form(self) -> HelmholtzProblem:
        return to_mixed_form(self.second_order())


@dataclass
class PlaneWaveProblem:
    """u = exp(i kappa d.x) with |d| = 1: zero source, matching Robin data"""

    kappa: float
    direction: Tuple[float, float] = (1.0, 0.0)
    box: Box = CENTERED_SQUARE

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        norm = np.hypot(*d)
        if norm == 0:
            raise ConfigurationError("plane wave direction must be nonzero")
        self.direction = tuple(d / norm)

    def exact(self, x, y) -> np.ndarray:
        dx, dy = self.direction
        return np.exp(1j * self.kappa * (dx * x + dy * y))

    def boundary(self, x, y, nx, ny) -> np.ndarray:
        dx, dy = self.direction
        return 1j * self.kappa * (dx * nx + dy * ny + 1.0) * self.exact(x, y)

    def second_order(self) -> SecondOrderProblem:
        return SecondOrderProblem(
            kappa=self.kappa,
            boundary=self.boundary,
            exact=self.exact,
            box=self.box,
            name=f"plane-wave-k{self.kappa:g}",
        )

    def to_mixed_form(self) -> HelmholtzProblem:
        return to_mixed_form(self.second_order())


@dataclass
class PoissonProblem:
    """-Laplace(u) = f with Dirichlet data; used for energy and stability checks"""

    source: Optional[Callable] = None
    dirichlet: Optional[Callable] = None
    exact: Optional[Callable] = None
    box: Box = (0.0, 1.0, 0.0, 1.0)

    @classmethod
    def quadratic(cls, box: Box = (0.0, 1.0, 0.0, 1.0)) -> "PoissonProblem":
        """u = x^2 + xy + 2y^2 - x + 1, so -Laplace(u) = -6; exact in the trace space for p >= 2"""

        def exact(x, y):
            return x * x + x * y + 2.0 * y * y - x + 1.0

        def source(x, y):
            return np.full(np.broadcast(x, y).shape, -6.0)

        return cls(source=source, dirichlet=exact, exact=exact, box=box)


@dataclass
class CaveConfig:
    """Nested boxes with decreasing wave number toward the center.

    kappa3 outside, kappa2 = kappa3/q2 in `middle`, kappa1 = kappa3/q1 in `inner`.
    """

    kappa3: float
    q1: float = 3.0
    q2: float = 2.0
    middle: Box = (-0.25, 0.25, -0.25, 0.25)
    inner: Box = (-0.125, 0.125, -0.125, 0.125)
    box: Box = CENTERED_SQUARE

    def __post_init__(self):
        if self.kappa3 <= 0:
            raise ConfigurationError(f"kappa3 must be positive, got {self.kappa3}")
        if self.q1 <= 0 or self.q2 <= 0:
            raise ConfigurationError("contrast ratios q1, q2 must be positive")

    @property
    def kappas(self) -> Tuple[float, float, float]:
        return self.kappa3 / self.q1, self.kappa3 / self.q2, self.kappa3

    def kappa_at(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k1, k2, k3 = self.kappas
        out = np.full(np.broadcast(x, y).shape, k3)
        out = np.where(_inside(self.middle, x, y), k2, out)
        return np.where(_inside(self.inner, x, y), k1, out)

    def source(self, x, y) -> np.ndarray:
        """Gaussian point-like source centered at the origin (mixed form)"""
        k = self.kappa3
        return np.exp(-((4.0 * k / np.pi) ** 2) * (x * x + y * y)) / (1j * k)

    def to_mixed_form(self) -> HelmholtzProblem:
        return HelmholtzProblem(
            kappa=self.kappa_at,
            source=self.source,
            boundary=None,
            box=self.box,
            name=f"cave-k{self.kappa3:g}",
            kappa_max=max(self.kappas),
        )


def _inside(box: Box, x, y) -> np.ndarray:
    return (x > box[0]) & (x < box[1]) & (y > box[2]) & (y < box[3])


def _aligned(value: float, origin: float, step: float) -> bool:
    k = (value - origin) / step
    return abs(k - round(k)) < 1e-9


def cave_subdomains(config: CaveConfig, mesh: Mesh2D) -> Tuple[np.ndarray, np.ndarray]:
    """Per-triangle wave number and region label (0 inner, 1 middle, 2 outer).

    Box sides must lie on mesh lines of the given (coarsest) mesh.
    """
    x0, _, y0, _ = mesh.box
    for name, box in (("middle", config.middle), ("inner", config.inner)):
        for value, origin, step in (
            (box[0], x0, mesh.hx),
            (box[1], x0, mesh.hx),
            (box[2], y0, mesh.hy),
            (box[3], y0, mesh.hy),
        ):
            if not _aligned(value, origin, step):
                raise ConfigurationError(
                    f"{name} box side {value} is not on a line of the {mesh.n}x{mesh.n} coarsest mesh"
                )
    c = mesh.centroids
    labels = np.full(mesh.n_triangles, 2)
    labels[_inside(config.middle, c[:, 0], c[:, 1])] = 1
    labels[_inside(config.inner, c[:, 0], c[:, 1])] = 0
    kappa = np.asarray(config.kappas)[labels]
    logger.debug(f"Cave regions: {np.bincount(labels, minlength=3).tolist()} triangles per region")
    return kappa, labels


def coarsest_cells(kappa: float, p: int, target: float = 3.2, side: float = 1.0) -> int:
    """Smallest power-of-two cells per side with kappa * (side / n) / p <= target"""
    if kappa <= 0 or p < 1:
        raise ConfigurationError("kappa must be positive and p >= 1")
    n = 1
    while kappa * (side / n) / p > target:
        n *= 2
    return n


def cells_for_ratio(kappa: float, p: int, ratio: float, side: float = 1.0) -> int:
    """Cells per side with kappa h0 / p closest to `ratio`, h0 the triangle diameter.

    Not restricted to powers of two: ratio 2.95 gives n0 = 96 (P1) and 48 (P2) at
    kappa = 200, ratio 1.47 gives n0 = 64 for P3.
    """
    if kappa <= 0 or p < 1 or ratio <= 0:
        raise ConfigurationError("kappa and ratio must be positive and p >= 1")
    return max(1, int(round(kappa * np.sqrt(2.0) * side / (p * ratio))))


def polynomial_problem(kappa: float, p: int, box: Box = (0.0, 1.0, 0.0, 1.0)) -> SecondOrderProblem:
    """Degree-p polynomial solution, reproduced exactly by the discretization"""
    if p < 1:
        raise ConfigurationError("degree must be >= 1")

    def exact(x, y):
        return x ** p + 0.5 * x * y ** (p - 1) - y + 1.0

    def laplacian(x, y):
        lap = p * (p - 1) * x ** (p - 2) if p >= 2 else 0.0 * x
        if p >= 3:
            lap = lap + 0.5 * (p - 1) * (p - 2) * x * y ** (p - 3)
        return lap

    def gradient(x, y):
        gx = p * x ** (p - 1) + 0.5 * y ** (p - 1)
        gy = 0.5 * (p - 1) * x * y ** (p - 2) - 1.0 if p >= 2 else -1.0 + 0.0 * x
        return gx, gy

    def source(x, y):
        return -laplacian(x, y) - kappa ** 2 * exact(x, y)

    def boundary(x, y, nx, ny):
        gx, gy = gradient(x, y)
        return gx * nx + gy * ny + 1j * kappa * exact(x, y)

    return SecondOrderProblem(
        kappa=kappa, source=source, boundary=boundary, exact=exact, box=box, name=f"polynomial-p{p}"
    )
