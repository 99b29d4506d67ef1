from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from hdgml.core.config import settings
from hdgml.core.exceptions import ConfigurationError, PoleError
from hdgml.models.symbols import HarmonicPair, StencilSymbol, ThreeLevelSymbol, TwoLevelSymbol
from hdgml.schemas.solver import CyclePlanSettings
from hdgml.services.hdg import assemble_condensed_1d
from hdgml.services.mesh import build_hierarchy_1d, build_mesh_1d
from hdgml.services.multilevel import build_level_stack_1d, cycle, make_plan, stack_mesh_sizes
from hdgml.services.solvers import GaussSeidel, gmres, weighted_jacobi_sweep

POLE_TOL = 1e-12
RESTRICTIONS = ("mass-weighted", "full-weighting")
SMOOTHER_SYMBOLS = ("jacobi", "gauss-seidel")


def _guard(name: str, value: complex) -> complex:
    if abs(value) < POLE_TOL:
        raise PoleError(name, value)
    return value


def sigma_factors(t: float) -> Tuple[complex, complex, complex, complex]:
    s1 = t ** 4 * 1j + t ** 2 * (8 - 12j) - 72 - 12j
    s2 = 36 * t - 2 * t ** 3
    s3 = 6 * t ** 2 - 72 + 12j
    s4 = t ** 4 - 24 * t ** 2 + 148
    return s1, s2, s3, s4


def closed_form_stencil(t: float) -> Tuple[complex, complex]:
    """(s0, s1) of the 1D periodic HDG-P1 operator from its closed form in t = kappa h"""
    t = float(t)
    _guard("t", t)
    sig1, sig2, sig3, sig4 = sigma_factors(t)
    _guard("sigma1", sig1)
    _guard("sigma4", sig4)
    cubic = _guard("18t - t^3", 18 * t - t ** 3)
    quintic = _guard("t^5 - 24t^3 + 148t", t ** 5 - 24 * t ** 3 + 148 * t)
    octic = _guard(
        "t(t^8 - 24t^6 + 184t^4 - 864t^2 + 5328)",
        t * (t ** 8 - 24 * t ** 6 + 184 * t ** 4 - 864 * t ** 2 + 5328),
    )
    s1 = (
        (1 / t) * (sig2 / (t * sig1) - sig2 * (3 * t ** 2 * 1j + 18) / (cubic * sig1))
        - (-2 * t ** 4 * 1j + 12 * t ** 2 * 1j + 72 + 136j) / quintic
        - (6 * t ** 2 - 72 + 12j) / quintic
    )
    heptic = -4 * t ** 7 * 1j + t ** 5 * (20 + 84j) + t ** 3 * (-432 - 480j) + t * (2736 + 432j)
    s0 = (
        -(1 / t) * (sig3 / sig4 - heptic / octic + 1)
        - (-4 * t ** 4 * 1j + 60 * t ** 2 * 1j + 72 - 160j) / quintic
        - sig3 / (t * sig4)
    )
    return complex(s0), complex(s1)


def oracle_stencil(t: float, n_elements: int = 8) -> Tuple[complex, complex]:
    """(s0, s1) read off the assembled periodic operator A = M^{-1} K with h = 1, kappa = t"""
    if n_elements < 3:
        raise ConfigurationError("the periodic oracle needs at least 3 elements")
    mesh = build_mesh_1d(0.0, float(n_elements), n_elements, periodic=True)
    system = assemble_condensed_1d(mesh, float(t), 1, "periodic")
    row = n_elements // 2
    a = system.operator.toarray()
    return complex(a[row, row]), complex(a[row, row + 1])


@lru_cache(maxsize=4096)
def stencil_coefficients(t: float) -> StencilSymbol:
    """Stencil of the periodic operator; the assembled oracle wins over a diverging closed form"""
    if t <= 0:
        raise ConfigurationError(f"t = kappa h must be positive, got {t}")
    oracle = oracle_stencil(t)
    try:
        closed = closed_form_stencil(t)
    except PoleError as e:
        logger.warning(f"Closed form unusable at t={t:g}: {e}; using the assembled stencil")
        return StencilSymbol(t=t, s0=oracle[0], s1=oracle[1], source="oracle", oracle=oracle)
    scale = max(abs(oracle[0]), abs(oracle[1]), 1.0)
    mismatch = max(abs(closed[0] - oracle[0]), abs(closed[1] - oracle[1])) / scale
    if mismatch > settings.STENCIL_MISMATCH_TOL:
        logger.warning(
            f"Closed-form stencil differs from the assembled operator at t={t:g} "
            f"(relative {mismatch:.2e}); using the assembled values"
        )
        return StencilSymbol(t=t, s0=oracle[0], s1=oracle[1], source="oracle", closed_form=closed, oracle=oracle)
    return StencilSymbol(t=t, s0=closed[0], s1=closed[1], source="closed-form", closed_form=closed, oracle=oracle)


def operator_symbol(t: float, theta) -> np.ndarray:
    return stencil_coefficients(float(t)).symbol(theta)


def smoother_symbol(kind: str, t: float, theta, omega: Optional[float] = None) -> np.ndarray:
    """Fourier symbol of one weighted Jacobi or forward Gauss-Seidel sweep"""
    omega = settings.DEFAULT_OMEGA if omega is None else omega
    stencil = stencil_coefficients(float(t))
    s0, s1 = stencil.s0, stencil.s1
    theta = np.asarray(theta, dtype=float)
    if kind == "jacobi":
        _guard("s0", s0)
        return 1.0 - (2.0 * omega / s0) * (s1 * np.cos(theta) + 0.5 * s0)
    if kind == "gauss-seidel":
        denominator = s1 * np.exp(-1j * theta) + s0
        if np.any(np.abs(denominator) < POLE_TOL):
            raise PoleError("s1 exp(-i theta) + s0", complex(np.min(np.abs(denominator))))
        return -s1 * np.exp(1j * theta) / denominator
    raise ConfigurationError(f"unknown smoother symbol {kind!r}; expected one of {SMOOTHER_SYMBOLS}")


def transfer_symbols(theta) -> Tuple[np.ndarray, np.ndarray]:
    """(restriction, prolongation) symbols of full weighting [1/4, 1/2, 1/4] and linear interpolation"""
    value = 0.5 * (1.0 + np.cos(np.asarray(theta, dtype=float)))
    return value, value.copy()


def prolongation_symbol(theta) -> np.ndarray:
    return transfer_symbols(theta)[1]


def restriction_symbol(theta, restriction: str = "mass-weighted") -> np.ndarray:
    """Full weighting, or Q_l = M_l^{-1} I^T M_L whose symbol is twice that on a uniform skeleton"""
    if restriction not in RESTRICTIONS:
        raise ConfigurationError(f"unknown restriction {restriction!r}; expected one of {RESTRICTIONS}")
    full_weighting, _ = transfer_symbols(theta)
    return 2.0 * full_weighting if restriction == "mass-weighted" else full_weighting


def complementary(theta: float) -> float:
    """theta - sign(theta) pi with sign(0) = 1"""
    return theta - (1.0 if theta >= 0 else -1.0) * np.pi


def harmonics(theta0: float) -> HarmonicPair:
    if not -np.pi / 2 < theta0 <= np.pi / 2:
        raise ConfigurationError(f"low frequency must lie in (-pi/2, pi/2], got {theta0}")
    return HarmonicPair(theta0=theta0, theta1=complementary(theta0))


def low_frequencies(samples: int) -> np.ndarray:
    """Uniform samples of (-pi/2, pi/2]"""
    return -np.pi / 2 + np.arange(1, samples + 1) * np.pi / samples


def full_frequencies(samples: int) -> np.ndarray:
    """Uniform samples of (-pi, pi]"""
    return -np.pi + np.arange(1, samples + 1) * 2.0 * np.pi / samples


def _smoother_matrix(kind: str, t: float, thetas: np.ndarray, omega: float) -> np.ndarray:
    if kind == "exact":
        return np.zeros((thetas.size, thetas.size), dtype=complex)
    return np.diag(smoother_symbol(kind, t, thetas, omega)).astype(complex)


def two_level_matrix(
    t: float,
    theta0: float,
    smoother: str = "jacobi",
    omega: Optional[float] = None,
    mu0: float = 0.5,
    mu1: float = 0.5,
    restriction: str = "mass-weighted",
) -> TwoLevelSymbol:
    """2x2 symbol of fine smoothing after a damped coarse correction on span{phi(theta0), phi(theta1)}"""
    omega = settings.DEFAULT_OMEGA if omega is None else omega
    pair = harmonics(theta0)
    thetas = pair.thetas
    coarse = operator_symbol(2.0 * t, 2.0 * theta0)
    if abs(coarse) < settings.RESONANCE_TOL:
        logger.debug(f"Coarse symbol vanishes at t={t:g}, theta={theta0:.4f}")
        return TwoLevelSymbol(
            t=t, theta0=theta0, matrix=np.full((2, 2), np.nan + 0j), spectral_radius=np.inf, resonant=True
        )
    fine = np.diag(operator_symbol(t, thetas))
    prolong = prolongation_symbol(thetas)[:, None]
    restrict = restriction_symbol(thetas, restriction)[None, :]
    identity = np.eye(2)
    coarse_correction = identity - mu0 * (prolong @ restrict @ fine) / coarse
    smoothing = identity - mu1 * (identity - _smoother_matrix(smoother, t, thetas, omega))
    matrix = smoothing @ coarse_correction
    return TwoLevelSymbol(
        t=t, theta0=theta0, matrix=matrix, spectral_radius=float(np.max(np.abs(np.linalg.eigvals(matrix))))
    )


def quad_frequencies(theta0: float) -> np.ndarray:
    """(theta00, theta01, theta10, theta11): the fine-grid harmonics of theta0 and theta1"""
    pair = harmonics(theta0)
    out = []
    for theta in pair.thetas:
        half = 0.5 * theta
        out.extend([half, complementary(half)])
    return np.array(out)


def three_level_matrix(
    t: float,
    theta0: float,
    smoother: str = "jacobi",
    omega: Optional[float] = None,
    mu: Sequence[float] = (0.5, 0.5, 0.5),
    middle_smoother: Optional[str] = None,
    restriction: str = "mass-weighted",
) -> ThreeLevelSymbol:
    """4x4 symbol of the down sweep over three levels, t = kappa h on the finest level.

    theta0 is a low frequency of the middle level; the coarsest level sees 2 theta0.
    """
    omega = settings.DEFAULT_OMEGA if omega is None else omega
    middle_smoother = smoother if middle_smoother is None else middle_smoother
    mu0, mu1, mu2 = mu
    pair = harmonics(theta0)
    middle = pair.thetas
    fine = quad_frequencies(theta0)
    coarse = operator_symbol(4.0 * t, 2.0 * theta0)
    a1 = operator_symbol(2.0 * t, middle)
    if abs(coarse) < settings.RESONANCE_TOL or np.any(np.abs(a1) < settings.RESONANCE_TOL):
        return ThreeLevelSymbol(
            t=t, theta0=theta0, matrix=np.full((4, 4), np.nan + 0j), spectral_radius=np.inf, resonant=True
        )
    a2 = np.diag(operator_symbol(t, fine))
    prolong_21 = np.zeros((4, 2))
    restrict_12 = np.zeros((2, 4))
    for alpha in range(2):
        rows = slice(2 * alpha, 2 * alpha + 2)
        prolong_21[rows, alpha] = prolongation_symbol(fine[rows])
        restrict_12[alpha, rows] = restriction_symbol(fine[rows], restriction)
    prolong_10 = prolongation_symbol(middle)[:, None]
    restrict_01 = restriction_symbol(middle, restriction)[None, :]

    i4 = np.eye(4)
    i2 = np.eye(2)
    coarse_term = i4 - mu0 * (prolong_21 @ prolong_10 @ restrict_01 @ restrict_12 @ a2) / coarse
    s1 = _smoother_matrix(middle_smoother, 2.0 * t, middle, omega)
    middle_term = i4 - mu1 * prolong_21 @ (i2 - s1) @ np.diag(1.0 / a1) @ restrict_12 @ a2
    fine_term = i4 - mu2 * (i4 - _smoother_matrix(smoother, t, fine, omega))
    matrix = fine_term @ middle_term @ coarse_term
    return ThreeLevelSymbol(
        t=t, theta0=theta0, matrix=matrix, spectral_radius=float(np.max(np.abs(np.linalg.eigvals(matrix))))
    )


def _map(func, items, threads: int):
    if threads <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def sweep_two_level(
    t: float,
    samples: Optional[int] = None,
    threads: Optional[int] = None,
    **kwargs,
) -> pd.DataFrame:
    """Spectral radius of the two-level symbol over sampled low frequencies"""
    samples = settings.LFA_SAMPLES if samples is None else samples
    threads = settings.THREADS if threads is None else threads
    stencil_coefficients(float(t))
    stencil_coefficients(float(2.0 * t))
    symbols = _map(lambda th: two_level_matrix(t, th, **kwargs), low_frequencies(samples), threads)
    frame = pd.DataFrame(
        {
            "theta": [s.theta0 for s in symbols],
            "rho": [s.spectral_radius for s in symbols],
            "resonant": [s.resonant for s in symbols],
        }
    )
    logger.info(
        f"Two-level sweep t={t:g}: max rho {frame.loc[~frame.resonant, 'rho'].max():.4f}, "
        f"{int(frame.resonant.sum())} resonant samples"
    )
    return frame


def sweep_three_level(
    t: float,
    samples: Optional[int] = None,
    threads: Optional[int] = None,
    **kwargs,
) -> pd.DataFrame:
    samples = settings.LFA_SAMPLES if samples is None else samples
    threads = settings.THREADS if threads is None else threads
    for factor in (1.0, 2.0, 4.0):
        stencil_coefficients(float(factor * t))
    symbols = _map(lambda th: three_level_matrix(t, th, **kwargs), low_frequencies(samples), threads)
    return pd.DataFrame(
        {
            "theta": [s.theta0 for s in symbols],
            "rho": [s.spectral_radius for s in symbols],
            "resonant": [s.resonant for s in symbols],
        }
    )


def sweep_smoother(t: float, samples: Optional[int] = None, omega: Optional[float] = None) -> pd.DataFrame:
    """|S~| of Jacobi and Gauss-Seidel over (-pi, pi]"""
    samples = settings.LFA_SAMPLES if samples is None else samples
    theta = full_frequencies(samples)
    return pd.DataFrame(
        {
            "theta": theta,
            "jacobi": np.abs(smoother_symbol("jacobi", t, theta, omega)),
            "gauss_seidel": np.abs(smoother_symbol("gauss-seidel", t, theta, omega)),
        }
    )


def measured_two_level_matrix(
    t: float,
    theta0: float,
    n_elements: int = 256,
    smoother: str = "jacobi",
    omega: Optional[float] = None,
    mu0: float = 0.5,
    mu1: float = 0.5,
) -> np.ndarray:
    """2x2 matrix of one actual two-level cycle restricted to the harmonics of theta0.

    theta0 must be a frequency of the periodic grid, i.e. a multiple of 2 pi / n_elements.
    """
    omega = settings.DEFAULT_OMEGA if omega is None else omega
    kind = {"jacobi": "weighted-jacobi", "gauss-seidel": "gauss-seidel"}.get(smoother)
    if kind is None:
        raise ConfigurationError(f"unknown smoother {smoother!r}")
    h = 1.0 / n_elements
    hierarchy = build_hierarchy_1d(0.0, 1.0, n_elements // 2, 2, periodic=True)
    stack = build_level_stack_1d(hierarchy, t / h, 1, "periodic")
    plan_settings = CyclePlanSettings(
        alpha=float("inf"),
        mu=[mu0, mu1],
        m2=1,
        m3=1,
        linear_smoother=kind,
        omega=omega,
        post_sweep=False,
    )
    plan = make_plan(plan_settings, t / h, 1, stack_mesh_sizes(stack))
    pair = harmonics(theta0)
    j = np.arange(n_elements)
    modes = [np.exp(1j * theta * j) for theta in pair.thetas]
    zero = np.zeros(n_elements, dtype=complex)
    matrix = np.zeros((2, 2), dtype=complex)
    for beta, mode in enumerate(modes):
        image = cycle(stack, plan, mode, zero)
        for alpha, other in enumerate(modes):
            matrix[alpha, beta] = np.vdot(other, image) / n_elements
    return matrix


def gmres_amplification_experiment(
    kappa: float = 200.0,
    h: float = 0.005,
    domain: Tuple[float, float] = (0.0, 10.0),
    smoother: str = "gmres",
    steps: int = 1,
    samples: int = 256,
    omega: Optional[float] = None,
    norm: str = "iterate",
) -> pd.DataFrame:
    """Amplification ||u1|| / ||u0|| of one smoothing step on A u = 0 with u0 = exp(i theta k)"""
    if norm not in ("iterate", "residual"):
        raise ConfigurationError(f"unknown norm {norm!r}")
    omega = settings.DEFAULT_OMEGA if omega is None else omega
    n_elements = int(round((domain[1] - domain[0]) / h))
    mesh = build_mesh_1d(domain[0], domain[1], n_elements)
    system = assemble_condensed_1d(mesh, kappa, 1, "dirichlet")
    operator = system.operator
    k = np.arange(1, n_elements)
    zero = np.zeros(k.size, dtype=complex)
    gauss_seidel = GaussSeidel(operator) if smoother == "gauss-seidel" else None

    def amplify(theta: float) -> float:
        u0 = np.exp(1j * theta * k)
        if smoother == "jacobi":
            u1 = weighted_jacobi_sweep(operator, zero, u0, omega, steps)
        elif smoother == "gauss-seidel":
            u1 = gauss_seidel.sweep(zero, u0, steps)
        elif smoother == "gmres":
            u1, _ = gmres(operator, zero, u0, max_steps=steps, tol=0.0)
        else:
            raise ConfigurationError(f"unknown smoother {smoother!r}")
        if norm == "residual":
            return float(np.linalg.norm(operator @ u1) / np.linalg.norm(operator @ u0))
        return float(np.linalg.norm(u1) / np.linalg.norm(u0))

    theta = full_frequencies(samples)
    return pd.DataFrame({"theta": theta, "rho": [amplify(th) for th in theta]})


def amplification_curves(
    kappa: float = 200.0,
    h: float = 0.005,
    domain: Tuple[float, float] = (0.0, 10.0),
    steps: int = 1,
    samples: int = 256,
    omega: Optional[float] = None,
    norm: str = "iterate",
) -> pd.DataFrame:
    """Jacobi, Gauss-Seidel and GMRES amplification curves side by side"""
    frames: Dict[str, pd.DataFrame] = {
        name: gmres_amplification_experiment(kappa, h, domain, name, steps, samples, omega, norm)
        for name in ("jacobi", "gauss-seidel", "gmres")
    }
    return pd.DataFrame(
        {
            "theta": frames["gmres"]["theta"],
            "jacobi": frames["jacobi"]["rho"],
            "gauss_seidel": frames["gauss-seidel"]["rho"],
            "gmres": frames["gmres"]["rho"],
        }
    )
