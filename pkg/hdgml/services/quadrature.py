from functools import lru_cache
from typing import List, Tuple

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1, 1]"""
    return legendre.leggauss(n)


@lru_cache(maxsize=None)
def gauss_lobatto_nodes(p: int) -> np.ndarray:
    """The p+1 Gauss-Lobatto-Legendre nodes on [-1, 1] in increasing order"""
    if p < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {p}")
    if p == 1:
        return np.array([-1.0, 1.0])
    inner = legendre.Legendre.basis(p).deriv().roots()
    return np.concatenate([[-1.0], np.sort(np.real(inner)), [1.0]])


@lru_cache(maxsize=None)
def _lagrange_coefficients(p: int) -> np.ndarray:
    vander = legendre.legvander(gauss_lobatto_nodes(p), p)
    return np.linalg.inv(vander)


def edge_basis(p: int, s: np.ndarray) -> np.ndarray:
    """Values (len(s), p+1) of the GLL Lagrange basis of degree p at reference points s"""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return legendre.legvander(s, p) @ _lagrange_coefficients(p)


@lru_cache(maxsize=None)
def edge_mass(p: int) -> np.ndarray:
    """Reference mass matrix of the GLL basis on [-1, 1]"""
    s, w = gauss_legendre(p + 2)
    psi = edge_basis(p, s)
    return psi.T @ (w[:, None] * psi)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1), exact to `degree`"""
    n = degree // 2 + 2
    a, wa = gauss_legendre(n)
    b, wb = gauss_legendre(n)
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    r = 0.25 * (1.0 + A) * (1.0 - B)
    s = 0.5 * (1.0 + B)
    w = WA * WB * (1.0 - B) / 8.0
    return np.stack([r.ravel(), s.ravel()], axis=1), w.ravel()


@lru_cache(maxsize=None)
def monomial_exponents(p: int, dim: int = 2) -> List[Tuple[int, ...]]:
    """Exponents of the complete polynomial space of degree p, graded by total degree"""
    if dim == 1:
        return [(k,) for k in range(p + 1)]
    return [(d - j, j) for d in range(p + 1) for j in range(d + 1)]


def monomials(points: np.ndarray, p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Values (npts, N) and gradients (dim, npts, N) of monomials at scaled points (npts, dim)"""
    points = np.atleast_2d(points)
    dim = points.shape[1]
    exps = np.array(monomial_exponents(p, dim))
    values = np.ones((points.shape[0], len(exps)))
    for d in range(dim):
        values *= points[:, d : d + 1] ** exps[:, d]
    grads = np.zeros((dim,) + values.shape)
    for d in range(dim):
        g = np.ones_like(values) * exps[:, d]
        for e in range(dim):
            power = exps[:, e] - (1 if e == d else 0)
            g = g * points[:, e : e + 1] ** np.maximum(power, 0)
        grads[d] = g
    return values, grads
