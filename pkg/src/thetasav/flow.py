"""
Intermediate-velocity solves, pressure Poisson update and projection.

Velocities have shape ``(2, nx, ny)``.  Navier-Stokes intermediate solves are
componentwise Helmholtz inversions; the Darcy ones are pointwise divisions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phase import Stencil, theta_stencil
from .spectral import Grid

__all__ = [
    "FlowParams",
    "VelocitySplitParts",
    "surface_tension",
    "ns_tilde_u1",
    "ns_tilde_u2",
    "darcy_tilde_u1",
    "darcy_tilde_u2",
    "pressure_coefficient",
    "pressure_poisson",
    "project_velocity",
]

KINDS = ("ns", "darcy")


@dataclass(frozen=True)
class FlowParams:
    kind: str = "ns"
    nu: float = 1.0
    alpha: float = 1000.0
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"flow kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("nu", "alpha", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def inertia(self) -> float:
        """Weight of du/dt: 1 for Navier-Stokes, tau for Darcy."""
        return 1.0 if self.kind == "ns" else self.tau


@dataclass
class VelocitySplitParts:
    u1: np.ndarray
    u2: np.ndarray


def surface_tension(grid: Grid, phi_star, mu_star) -> np.ndarray:
    """sum_k phi*_k grad mu*_k."""
    grad_mu = grid.gradient(mu_star)  # (K, 2, nx, ny)
    return grid.truncate(np.einsum("kxy,kdxy->dxy", phi_star, grad_mu))


def ns_tilde_u1(grid: Grid, u_n, u_prev, p_n, nu, theta, dt, stencil: Stencil | None = None, forcing=None):
    a, b, c = stencil or theta_stencil(theta)
    rhs = (b * u_n - c * u_prev) / dt + nu * (1 - theta) * grid.laplacian(u_n) - grid.gradient(p_n)
    if forcing is not None:
        rhs = rhs + forcing
    return grid.solve_helmholtz(a / dt, nu * theta, rhs)


def ns_tilde_u2(grid: Grid, u_star, phi_star, mu_star, nu, theta, dt, stencil: Stencil | None = None):
    a = (stencil or theta_stencil(theta)).a
    rhs = -grid.convect(u_star) - surface_tension(grid, phi_star, mu_star)
    return grid.solve_helmholtz(a / dt, nu * theta, rhs)


def _darcy_shift(alpha, nu, tau, theta, dt, a):
    return tau * a / dt + alpha * nu * theta


def darcy_tilde_u1(grid: Grid, u_n, u_prev, p_n, alpha, nu, tau, theta, dt, stencil: Stencil | None = None, forcing=None):
    a, b, c = stencil or theta_stencil(theta)
    rhs = (tau * b / dt - alpha * nu * (1 - theta)) * u_n - (tau * c / dt) * u_prev - grid.gradient(p_n)
    if forcing is not None:
        rhs = rhs + forcing
    return rhs / _darcy_shift(alpha, nu, tau, theta, dt, a)


def darcy_tilde_u2(grid: Grid, phi_star, mu_star, alpha, nu, tau, theta, dt, stencil: Stencil | None = None):
    a = (stencil or theta_stencil(theta)).a
    return -surface_tension(grid, phi_star, mu_star) / _darcy_shift(alpha, nu, tau, theta, dt, a)


def pressure_coefficient(theta: float, dt: float, inertia: float = 1.0, stencil: Stencil | None = None) -> float:
    """``inertia * a / (theta dt)``; equals (2 theta + 1)/(2 theta dt) on the interior stencil."""
    a = (stencil or theta_stencil(theta)).a
    return inertia * a / (theta * dt)


def pressure_poisson(grid: Grid, u_tilde, p_n, coeff: float) -> np.ndarray:
    """
    New pressure from ``lap p^{n+1} = lap p^n + coeff div u_tilde``.

    The increment is solved with the ``div . grad`` symbol and added to
    ``p^n``, so the returned pressure keeps the zero-mean gauge of ``p^n``.
    """
    increment = grid.solve_poisson_mean_zero(coeff * grid.divergence(u_tilde), projection=True)
    return p_n + increment


def project_velocity(grid: Grid, u_tilde, p_new, p_n, coeff: float) -> np.ndarray:
    return u_tilde - grid.gradient(p_new - p_n) / coeff
