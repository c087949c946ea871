"""
Phase-field pieces of the split SAV solve.

Phase fields are stacked as ``(K, nx, ny)``.  A two-component mixture is
carried by a single order parameter (``K = 1``) and has no sum-to-one
multiplier; with ``N >= 3`` every component is stored (``K = N``).

The interior two-step scheme and the first-order start-up step share every
routine here: the backward-difference part of each equation is written as
``(a x^{n+1} - b x^n + c x^{n-1}) / dt`` and the caller passes ``(a, b, c)``
through a :class:`Stencil`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spectral import Grid

__all__ = [
    "PhaseParams",
    "Stencil",
    "theta_stencil",
    "BOOTSTRAP_STENCIL",
    "StarCache",
    "PhaseSplitParts",
    "SolvabilityError",
    "double_well",
    "double_well_deriv",
    "sav_denominator",
    "nonlinear_terms",
    "extrapolate_star",
    "solve_sub11",
    "solve_sub12",
    "solve_sub21",
    "compute_r1",
    "compute_r2",
    "assemble_phase",
]

D_TOL = 1e-12


class SolvabilityError(ArithmeticError):
    """A denominator that theory keeps positive came out non-positive."""

    def __init__(self, message: str, **dump):
        super().__init__(message)
        self.dump = dump


@dataclass(frozen=True)
class PhaseParams:
    n_components: int
    mobility: float
    lam: float
    eps: float
    c_shift: float = 10.0

    def __post_init__(self):
        if self.n_components < 2:
            raise ValueError("need at least two components")
        for name in ("mobility", "lam", "eps", "c_shift"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_fields(self) -> int:
        """Number of stored phase fields."""
        return 1 if self.n_components == 2 else self.n_components


class Stencil(NamedTuple):
    """Coefficients of ``a x^{n+1} - b x^n + c x^{n-1}``."""

    a: float
    b: float
    c: float


def theta_stencil(theta: float) -> Stencil:
    return Stencil((2 * theta + 1) / 2, 2 * theta, (2 * theta - 1) / 2)


BOOTSTRAP_STENCIL = Stencil(1.0, 1.0, 0.0)


# ----------------------------------------------------------------------
# potential


def double_well(phi, eps: float):
    """F(phi) = phi^2 (1 - phi)^2 / (4 eps^2)."""
    phi = np.asarray(phi, dtype=float)
    return phi**2 * (1.0 - phi) ** 2 / (4.0 * eps**2)


def double_well_deriv(phi, eps: float):
    """f(phi) = phi (phi - 1/2)(phi - 1) / eps^2."""
    phi = np.asarray(phi, dtype=float)
    return phi * (phi - 0.5) * (phi - 1.0) / eps**2


def sav_denominator(grid: Grid, phi: np.ndarray, eps: float, c_shift: float) -> float:
    """sqrt(sum_k int F(phi_k) dx + C)."""
    energy = float(np.sum(grid.integral(double_well(phi, eps))))
    return float(np.sqrt(energy + c_shift))


def nonlinear_terms(grid: Grid, phi_star: np.ndarray, params: PhaseParams) -> tuple[np.ndarray, np.ndarray]:
    """
    Mean-free SAV nonlinearity and the sum-to-one multiplier.

    Returns
    -------
    h_bar : ndarray, shape (K, nx, ny)
        ``H_k - mean(H_k)`` with ``H_k = f(phi_k) / sqrt(int sum F + C)``.
    gamma : ndarray, shape (nx, ny)
        ``-(1/N) sum_k h_bar_k``; identically zero for two components.
    """
    denom = sav_denominator(grid, phi_star, params.eps, params.c_shift)
    h = double_well_deriv(phi_star, params.eps) / denom
    h_bar = h - grid.mean(h)[..., None, None]
    if params.n_components == 2:
        gamma = np.zeros(grid.shape)
    else:
        gamma = -np.sum(h_bar, axis=0) / params.n_components
    return h_bar, gamma


def extrapolate_star(x_n, x_prev, theta: float):
    """(1 + theta) x^n - theta x^{n-1}."""
    return (1.0 + theta) * x_n - theta * x_prev


@dataclass
class StarCache:
    """Explicitly extrapolated quantities shared by one time step."""

    phi: np.ndarray
    mu: np.ndarray
    u: np.ndarray
    h_bar: np.ndarray
    gamma: np.ndarray
    advection: np.ndarray  # div(u* phi*_k), shape (K, nx, ny)

    @property
    def source(self) -> np.ndarray:
        """h_bar_k + gamma."""
        return self.h_bar + self.gamma

    @classmethod
    def build(cls, grid: Grid, phi, mu, u, params: PhaseParams) -> "StarCache":
        h_bar, gamma = nonlinear_terms(grid, phi, params)
        return cls(phi, mu, u, h_bar, gamma, grid.advect_scalar(u, phi))


@dataclass
class PhaseSplitParts:
    """Linear pieces of one phase update before ``q^{n+theta}`` is known."""

    phi11: np.ndarray
    mu11: np.ndarray
    phi12: np.ndarray
    mu12: np.ndarray
    phi21: np.ndarray
    mu21: np.ndarray
    r1: float
    r2: float
    denominator: float

    @property
    def phi1(self):
        return self.phi11 + self.r1 * self.phi12

    @property
    def mu1(self):
        return self.mu11 + self.r1 * self.mu12

    @property
    def phi2(self):
        return self.phi21 + self.r2 * self.phi12

    @property
    def mu2(self):
        return self.mu21 + self.r2 * self.mu12


# ----------------------------------------------------------------------
# subsystem solves


def solve_sub11(
    grid: Grid,
    phi_n,
    phi_prev,
    mu_n,
    source,
    r_n: float,
    params: PhaseParams,
    theta: float,
    dt: float,
    stencil: Stencil | None = None,
    forcing=None,
):
    """
    q-free, r-free part of the phase update.

    Solves ``(a/dt - M lam theta lap) phi11 = (b phi^n - c phi^{n-1})/dt + g
    + M lam (1-theta) lap phi^n - M lam (1-theta) r^n (h_bar + gamma)``, then
    recovers ``mu11`` from ``theta mu11 + (1-theta) mu^n``.
    """
    a, b, c = stencil or theta_stencil(theta)
    ml = params.mobility * params.lam
    lap_n = grid.laplacian(phi_n)
    rhs = (b * phi_n - c * phi_prev) / dt + ml * (1 - theta) * lap_n - ml * (1 - theta) * r_n * source
    if forcing is not None:
        rhs = rhs + forcing
    phi11 = grid.solve_helmholtz(a / dt, ml * theta, rhs)
    mu_theta = params.lam * (-grid.laplacian(theta * phi11 + (1 - theta) * phi_n) + (1 - theta) * r_n * source)
    mu11 = (mu_theta - (1 - theta) * mu_n) / theta
    return phi11, mu11


def solve_sub12(grid: Grid, source, params: PhaseParams, theta: float, dt: float, stencil: Stencil | None = None):
    a = (stencil or theta_stencil(theta)).a
    ml = params.mobility * params.lam
    phi12 = grid.solve_helmholtz(a / dt, ml * theta, -ml * theta * source)
    mu12 = params.lam * (-grid.laplacian(phi12) + source)
    return phi12, mu12


def solve_sub21(grid: Grid, advection, params: PhaseParams, theta: float, dt: float, stencil: Stencil | None = None):
    """Advective q-branch: ``(a/dt - M lam theta lap) phi21 = -div(u* phi*)``."""
    a = (stencil or theta_stencil(theta)).a
    ml = params.mobility * params.lam
    phi21 = grid.solve_helmholtz(a / dt, ml * theta, -advection)
    mu21 = -params.lam * grid.laplacian(phi21)
    return phi21, mu21


def _r_denominator(grid: Grid, phi12, h_bar, a: float) -> float:
    d = a - 0.5 * a * grid.l2_inner(h_bar, phi12)
    if not d > D_TOL:
        raise SolvabilityError(f"r-equation denominator {d!r} is not positive", denominator=d)
    return d


def compute_r1(
    grid: Grid,
    phi11,
    phi12,
    phi_n,
    phi_prev,
    h_bar,
    r_n: float,
    r_prev: float,
    theta: float,
    dt: float,
    stencil: Stencil | None = None,
) -> tuple[float, float]:
    """Return ``(r1, D)`` for the q-free branch of the r equation."""
    a, b, c = stencil or theta_stencil(theta)
    d = _r_denominator(grid, phi12, h_bar, a)
    num = b * r_n - c * r_prev + 0.5 * grid.l2_inner(h_bar, a * phi11 - b * phi_n + c * phi_prev)
    return num / d, d


def compute_r2(grid: Grid, phi21, phi12, h_bar, theta: float, dt: float, stencil: Stencil | None = None):
    a = (stencil or theta_stencil(theta)).a
    d = _r_denominator(grid, phi12, h_bar, a)
    return 0.5 * a * grid.l2_inner(h_bar, phi21) / d, d


def split_phase(
    grid: Grid,
    star: StarCache,
    phi_n,
    phi_prev,
    mu_n,
    r_n: float,
    r_prev: float,
    params: PhaseParams,
    theta: float,
    dt: float,
    stencil: Stencil | None = None,
    forcing=None,
) -> PhaseSplitParts:
    """Run the three Helmholtz solves and the two r reductions."""
    stencil = stencil or theta_stencil(theta)
    src = star.source
    phi11, mu11 = solve_sub11(grid, phi_n, phi_prev, mu_n, src, r_n, params, theta, dt, stencil, forcing)
    phi12, mu12 = solve_sub12(grid, src, params, theta, dt, stencil)
    phi21, mu21 = solve_sub21(grid, star.advection, params, theta, dt, stencil)
    r1, d = compute_r1(grid, phi11, phi12, phi_n, phi_prev, star.h_bar, r_n, r_prev, theta, dt, stencil)
    r2, _ = compute_r2(grid, phi21, phi12, star.h_bar, theta, dt, stencil)
    return PhaseSplitParts(phi11, mu11, phi12, mu12, phi21, mu21, r1, r2, d)


def assemble_phase(parts: PhaseSplitParts, q_theta: float):
    """Combine the split pieces once ``q^{n+theta}`` is known."""
    phi = parts.phi1 + q_theta * parts.phi2
    mu = parts.mu1 + q_theta * parts.mu2
    r = parts.r1 + q_theta * parts.r2
    return phi, mu, r
