from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from hdgml.core.exceptions import ConfigurationError


@dataclass(frozen=True)
class Mesh1D:
    """Uniform partition of an interval into n_elements cells"""

    a: float
    b: float
    n_elements: int
    level: int = 0
    periodic: bool = False

    def __post_init__(self):
        if not self.b > self.a:
            raise ConfigurationError(f"interval must satisfy a < b, got ({self.a}, {self.b})")
        if self.n_elements < 1:
            raise ConfigurationError(f"n_elements must be >= 1, got {self.n_elements}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_elements

    @property
    def nodes(self) -> np.ndarray:
        """Node coordinates; the periodic mesh identifies b with a"""
        x = np.linspace(self.a, self.b, self.n_elements + 1)
        return x[:-1] if self.periodic else x

    @property
    def n_nodes(self) -> int:
        return self.n_elements if self.periodic else self.n_elements + 1

    @property
    def cells(self) -> np.ndarray:
        """(n_elements, 2) node ids of every cell"""
        left = np.arange(self.n_elements)
        right = left + 1
        if self.periodic:
            right = right % self.n_elements
        return np.stack([left, right], axis=1)

    @property
    def boundary_nodes(self) -> np.ndarray:
        if self.periodic:
            return np.zeros(0, dtype=int)
        return np.array([0, self.n_elements])


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Structured triangulation of a rectangle, every cell split along its rising diagonal"""

    n: int
    level: int
    box: Tuple[float, float, float, float]
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    triangle_edge_signs: np.ndarray
    edge_triangles: np.ndarray
    boundary_edges: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def hx(self) -> float:
        return (self.box[1] - self.box[0]) / self.n

    @property
    def hy(self) -> float:
        return (self.box[3] - self.box[2]) / self.n

    @property
    def h(self) -> float:
        """Element diameter (the cell diagonal)"""
        return float(np.hypot(self.hx, self.hy))

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def locate(self, points: Union[np.ndarray, List[Tuple[float, float]]]) -> np.ndarray:
        """Triangle ids containing the given points (points on shared edges go to the lower triangle)"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x0, _, y0, _ = self.box
        sx = (pts[:, 0] - x0) / self.hx
        sy = (pts[:, 1] - y0) / self.hy
        i = np.clip(np.floor(sx).astype(int), 0, self.n - 1)
        j = np.clip(np.floor(sy).astype(int), 0, self.n - 1)
        xi = sx - i
        eta = sy - j
        cell = j * self.n + i
        upper = eta > xi + 1e-12
        return 2 * cell + upper.astype(int)


@dataclass
class MeshHierarchy:
    """Nested meshes from coarsest (index 0) to finest with parent/child index maps.

    child_edges[l] maps every skeleton entity of level l to its children on level l+1
    (two edges in 2D, the injected node in 1D); child_cells[l] does the same for
    triangles (four children) or intervals (two children).
    """

    meshes: List[Union[Mesh1D, Mesh2D]]
    child_edges: List[np.ndarray] = field(default_factory=list)
    child_cells: List[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.meshes)

    def __getitem__(self, level: int) -> Union[Mesh1D, Mesh2D]:
        return self.meshes[level]

    @property
    def finest(self) -> Union[Mesh1D, Mesh2D]:
        return self.meshes[-1]

    @property
    def coarsest(self) -> Union[Mesh1D, Mesh2D]:
        return self.meshes[0]

    @property
    def n_levels(self) -> int:
        """Index L of the finest level"""
        return len(self.meshes) - 1

    def parent_edges(self, level: int) -> np.ndarray:
        """Coarse parent of every level-`level` edge, -1 where the edge is new"""
        if level == 0:
            raise ConfigurationError("level 0 has no parent level")
        fine = self.meshes[level]
        count = fine.n_edges if isinstance(fine, Mesh2D) else fine.n_nodes
        parent = -np.ones(count, dtype=int)
        children = self.child_edges[level - 1]
        for column in range(children.shape[1]):
            parent[children[:, column]] = np.arange(children.shape[0])
        return parent

    def parent_cells(self, level: int) -> np.ndarray:
        if level == 0:
            raise ConfigurationError("level 0 has no parent level")
        children = self.child_cells[level - 1]
        parent = np.empty(children.size, dtype=int)
        for column in range(children.shape[1]):
            parent[children[:, column]] = np.arange(children.shape[0])
        return parent

    def nesting_error(self, level: int) -> Optional[float]:
        """Largest distance of a child edge endpoint from its parent edge (2D only)"""
        coarse = self.meshes[level]
        fine = self.meshes[level + 1]
        if not isinstance(coarse, Mesh2D):
            return None
        worst = 0.0
        a = coarse.vertices[coarse.edges[:, 0]]
        b = coarse.vertices[coarse.edges[:, 1]]
        d = b - a
        length2 = np.einsum("ij,ij->i", d, d)
        for column in range(2):
            child = self.child_edges[level][:, column]
            for end in range(2):
                p = fine.vertices[fine.edges[child, end]]
                s = np.einsum("ij,ij->i", p - a, d) / length2
                proj = a + s[:, None] * d
                worst = max(worst, float(np.max(np.hypot(*(p - proj).T))))
        return worst
