"""
Time-step orchestration for the theta-weighted SAV / projection schemes.

One step runs, in order: star extrapolation, SAV nonlinear terms, the three
phase Helmholtz solves and the two r reductions, the two intermediate
velocity solves, the eta integrals and the scalar ``q`` equation, assembly,
the pressure Poisson update and the projection.  The first step from the
initial data uses the same pipeline with the one-step stencil ``(1, 1, 0)``
and star values replaced by the initial values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from . import flow as fl
from .phase import (
    BOOTSTRAP_STENCIL,
    D_TOL,
    PhaseParams,
    SolvabilityError,
    StarCache,
    Stencil,
    assemble_phase,
    extrapolate_star,
    nonlinear_terms,
    sav_denominator,
    split_phase,
    theta_stencil,
)
from .spectral import Grid

logger = logging.getLogger(__name__)

__all__ = [
    "ModelParams",
    "Level",
    "StepInfo",
    "Diagnostics",
    "NonFiniteError",
    "GMatrix",
    "g_norm_pair",
    "g_quadratic_pair",
    "gf_identity_check",
    "eta_terms",
    "solve_q_scalar",
    "initial_level",
    "bootstrap",
    "step",
    "modified_energy",
    "total_mass",
    "scheme_residuals",
    "Simulation",
]

Forcing = Callable[[float], tuple]


class NonFiniteError(FloatingPointError):
    """A step produced NaN or inf."""


@dataclass(frozen=True)
class ModelParams:
    """Every physical and discretisation parameter of one run."""

    n_components: int = 2
    kind: str = "ns"
    mobility: float = 10.0
    lam: float = 0.01
    eps: float = 0.05
    c_shift: float = 10.0
    nu: float = 1.0
    alpha: float = 1000.0
    tau: float = 1.0
    theta: float = 0.5
    dt: float = 1e-3

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(
                f"theta={self.theta} is outside [1/2, 1]; the G-norm energy estimate "
                "(and hence unconditional stability) only holds there"
            )
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        # delegate the remaining checks
        self.phase
        self.flow

    @property
    def phase(self) -> PhaseParams:
        return PhaseParams(self.n_components, self.mobility, self.lam, self.eps, self.c_shift)

    @property
    def flow(self) -> fl.FlowParams:
        return fl.FlowParams(self.kind, self.nu, self.alpha, self.tau)

    @property
    def n_fields(self) -> int:
        return 1 if self.n_components == 2 else self.n_components


@dataclass
class Level:
    """All unknowns at one time level."""

    t: float
    phi: np.ndarray  # (K, nx, ny)
    mu: np.ndarray  # (K, nx, ny)
    u: np.ndarray  # (2, nx, ny)
    u_tilde: np.ndarray  # (2, nx, ny)
    p: np.ndarray  # (nx, ny)
    r: float
    q: float

    def is_finite(self) -> bool:
        arrays = (self.phi, self.mu, self.u, self.u_tilde, self.p)
        return all(np.all(np.isfinite(a)) for a in arrays) and np.isfinite(self.r) and np.isfinite(self.q)


@dataclass
class StepInfo:
    q_theta: float
    eta1: float
    eta2: float
    denominator: float
    margin_q: float


@dataclass
class Diagnostics:
    step: int
    time: float
    modified_energy: float
    mass: list
    q: float
    r: float
    max_div_u: float
    margin_D: float
    margin_q: float
    sum_deviation: float = 0.0


# ----------------------------------------------------------------------
# G-norm machinery


@dataclass(frozen=True)
class GMatrix:
    theta: float

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")

    @property
    def g11(self) -> float:
        return self.theta * (2 * self.theta + 3) / 2

    @property
    def g12(self) -> float:
        return -(self.theta + 1) * (2 * self.theta - 1) / 2

    @property
    def g22(self) -> float:
        return self.theta * (2 * self.theta - 1) / 2

    def as_array(self) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g12, self.g22]])

    def form(self, ww: float, vv: float, wv: float) -> float:
        """Quadratic form from the Gram entries (w,w), (v,v), (w,v)."""
        return self.g11 * ww + self.g22 * vv + 2 * self.g12 * wv


def g_norm_pair(grid: Grid, w, v, theta: float, inner=None) -> float:
    """
    ``||(w, v)||_G^2`` for fields.

    ``inner`` overrides the L2 pairing, e.g. ``grid.grad_inner`` for the
    gradient G-norm used in the modified energy.
    """
    grid.check(w, v)
    inner = inner or grid.l2_inner
    return GMatrix(theta).form(inner(w, w), inner(v, v), inner(w, v))


def g_quadratic_pair(w: float, v: float, theta: float) -> float:
    return GMatrix(theta).form(w * w, v * v, w * v)


def gf_identity_check(w_new, w_n, w_prev, theta: float, grid: Grid | None = None) -> tuple[float, float]:
    """
    Both sides of the G-norm telescoping identity for one triple.

    Works on scalars when ``grid`` is None and on fields otherwise.
    """
    a, b, c = theta_stencil(theta)
    if grid is None:
        lhs = (a * w_new - b * w_n + c * w_prev) * (theta * w_new + (1 - theta) * w_n)
        jump = w_new - 2 * w_n + w_prev
        rhs = (
            0.5 * g_quadratic_pair(w_new, w_n, theta)
            - 0.5 * g_quadratic_pair(w_n, w_prev, theta)
            + theta * (2 * theta - 1) / 4 * jump * jump
        )
        return float(lhs), float(rhs)
    lhs = grid.l2_inner(a * w_new - b * w_n + c * w_prev, theta * w_new + (1 - theta) * w_n)
    jump = w_new - 2 * w_n + w_prev
    rhs = (
        0.5 * g_norm_pair(grid, w_new, w_n, theta)
        - 0.5 * g_norm_pair(grid, w_n, w_prev, theta)
        + theta * (2 * theta - 1) / 4 * grid.l2_inner(jump, jump)
    )
    return lhs, rhs


# ----------------------------------------------------------------------
# q equation


def eta_terms(grid: Grid, star: StarCache, momentum_source, parts, vparts, u_n, mu_n, theta: float):
    """
    Coefficients of the linear q equation.

    ``momentum_source`` is ``sum phi* grad mu*`` plus ``u* . grad u*`` for
    Navier-Stokes; Darcy passes the surface-tension term alone.
    """
    eta1 = grid.l2_inner(star.advection, theta * parts.mu2) + grid.l2_inner(momentum_source, theta * vparts.u2)
    eta2 = grid.l2_inner(star.advection, theta * parts.mu1 + (1 - theta) * mu_n) + grid.l2_inner(
        momentum_source, theta * vparts.u1 + (1 - theta) * u_n
    )
    return eta1, eta2


def solve_q_scalar(eta1, eta2, q_n, q_prev, theta, dt, stencil: Stencil | None = None):
    """Return ``(q^{n+theta}, q^{n+1}, margin)``."""
    a, b, c = stencil or theta_stencil(theta)
    base = a / (theta * dt)
    margin = base - eta1
    if not margin > D_TOL * base:
        raise SolvabilityError(f"q-equation coefficient {margin!r} is not positive", eta1=eta1, eta2=eta2)
    rhs = (a * (1 - theta) / theta + b) / dt * q_n - c / dt * q_prev + eta2
    q_theta = rhs / margin
    return q_theta, (q_theta - (1 - theta) * q_n) / theta, margin


# ----------------------------------------------------------------------
# stepping


def _momentum_source(grid: Grid, star: StarCache, kind: str):
    surf = fl.surface_tension(grid, star.phi, star.mu)
    if kind == "ns":
        return surf + grid.convect(star.u)
    return surf


def _star(grid: Grid, prev: Level, cur: Level, params: ModelParams, bootstrap_step: bool) -> StarCache:
    if bootstrap_step:
        return StarCache.build(grid, cur.phi, cur.mu, cur.u, params.phase)
    th = params.theta
    return StarCache.build(
        grid,
        extrapolate_star(cur.phi, prev.phi, th),
        extrapolate_star(cur.mu, prev.mu, th),
        extrapolate_star(cur.u, prev.u, th),
        params.phase,
    )


def _advance(
    grid: Grid,
    prev: Level,
    cur: Level,
    params: ModelParams,
    stencil: Stencil,
    star: StarCache,
    forcing: Optional[Forcing],
) -> tuple[Level, StepInfo]:
    th, dt = params.theta, params.dt
    fp = params.flow
    g_phi = g_u = None
    if forcing is not None:
        g_phi, g_u = forcing(cur.t + th * dt)

    parts = split_phase(
        grid, star, cur.phi, prev.phi, cur.mu, cur.r, prev.r, params.phase, th, dt, stencil, g_phi
    )

    source = _momentum_source(grid, star, fp.kind)
    if fp.kind == "ns":
        u1 = fl.ns_tilde_u1(grid, cur.u, prev.u, cur.p, fp.nu, th, dt, stencil, g_u)
        u2 = grid.solve_helmholtz(stencil.a / dt, fp.nu * th, -source)
    else:
        u1 = fl.darcy_tilde_u1(grid, cur.u, prev.u, cur.p, fp.alpha, fp.nu, fp.tau, th, dt, stencil, g_u)
        u2 = -source / (fp.tau * stencil.a / dt + fp.alpha * fp.nu * th)
    vparts = fl.VelocitySplitParts(u1, u2)

    eta1, eta2 = eta_terms(grid, star, source, parts, vparts, cur.u, cur.mu, th)
    q_theta, q_new, margin = solve_q_scalar(eta1, eta2, cur.q, prev.q, th, dt, stencil)

    phi, mu, r = assemble_phase(parts, q_theta)
    u_tilde = u1 + q_theta * u2
    coeff = fl.pressure_coefficient(th, dt, fp.inertia, stencil)
    p = fl.pressure_poisson(grid, u_tilde, cur.p, coeff)
    u = fl.project_velocity(grid, u_tilde, p, cur.p, coeff)

    new = Level(cur.t + dt, phi, mu, u, u_tilde, p, r, q_new)
    info = StepInfo(q_theta, eta1, eta2, parts.denominator, margin)
    if not new.is_finite():
        raise NonFiniteError(f"non-finite values after step to t={new.t:.6g} (info={info})")
    return new, info


def initial_level(grid: Grid, phi0, u0, p0, params: ModelParams, t0: float = 0.0) -> Level:
    """
    Step-0 unknowns: ``r = sqrt(int sum F + C)``, ``q = 1``,
    ``mu = lam(-lap phi + (h_bar + gamma) r)``, ``u_tilde = u``.

    The pressure is shifted to zero mean (periodic gauge).
    """
    phi0 = np.array(phi0, dtype=float).reshape((params.n_fields,) + grid.shape)
    u0 = np.array(u0, dtype=float).reshape((2,) + grid.shape)
    p0 = np.array(p0, dtype=float).reshape(grid.shape)
    p0 = p0 - p0.mean()
    r0 = sav_denominator(grid, phi0, params.eps, params.c_shift)
    h_bar, gamma = nonlinear_terms(grid, phi0, params.phase)
    mu0 = params.lam * (-grid.laplacian(phi0) + (h_bar + gamma) * r0)
    return Level(t0, phi0, mu0, u0, u0.copy(), p0, r0, 1.0)


def bootstrap(grid: Grid, level0: Level, params: ModelParams, forcing: Optional[Forcing] = None):
    """First-order start-up step from the initial data to ``t^1``."""
    star = _star(grid, level0, level0, params, bootstrap_step=True)
    return _advance(grid, level0, level0, params, BOOTSTRAP_STENCIL, star, forcing)


def step(grid: Grid, prev: Level, cur: Level, params: ModelParams, forcing: Optional[Forcing] = None):
    """Second-order theta step from levels ``n-1`` and ``n`` to ``n+1``."""
    star = _star(grid, prev, cur, params, bootstrap_step=False)
    return _advance(grid, prev, cur, params, theta_stencil(params.theta), star, forcing)


# ----------------------------------------------------------------------
# diagnostics


def modified_energy(grid: Grid, new: Level, old: Level, params: ModelParams) -> float:
    """
    G-norm modified energy of the pair ``(new, old)``.

    Passing the same level twice gives the single-level value
    ``lam/2 sum ||grad phi||^2 + lam r^2 + q^2/2 + kappa/2 ||u||^2 + ...``.
    """
    th, dt = params.theta, params.dt
    kappa = params.flow.inertia
    G = GMatrix(th)
    e_phi = G.form(
        grid.grad_inner(new.phi, new.phi), grid.grad_inner(old.phi, old.phi), grid.grad_inner(new.phi, old.phi)
    )
    e_u = G.form(grid.l2_inner(new.u, new.u), grid.l2_inner(old.u, old.u), grid.l2_inner(new.u, old.u))
    grad_p = grid.gradient(new.p)
    return (
        0.5 * params.lam * e_phi
        + params.lam * g_quadratic_pair(new.r, old.r, th)
        + 0.5 * g_quadratic_pair(new.q, old.q, th)
        + 0.5 * kappa * e_u
        + th**2 * dt**2 / (kappa * (2 * th + 1)) * grid.l2_inner(grad_p, grad_p)
    )


def total_mass(grid: Grid, level: Level, params: ModelParams) -> list:
    """Mass of every component; the second phase of a binary mixture is ``|Omega| - m_1``."""
    m = [float(x) for x in grid.integral(level.phi)]
    if params.n_components == 2:
        m.append(grid.area - m[0])
    return m


def scheme_residuals(
    grid: Grid,
    prev: Level,
    cur: Level,
    new: Level,
    params: ModelParams,
    bootstrap_step: bool = False,
    forcing: Optional[Forcing] = None,
) -> dict:
    """
    Relative residuals of the seven discrete equations evaluated directly on
    three consecutive levels (independent of the split-solve path).

    Each residual is ``max|lhs - rhs|`` divided by the largest max-norm of
    the individual terms.
    """
    th, dt = params.theta, params.dt
    fp = params.flow
    kappa = fp.inertia
    st = BOOTSTRAP_STENCIL if bootstrap_step else theta_stencil(th)
    a, b, c = st
    if bootstrap_step:
        prev = cur
        phi_s, mu_s, u_s = cur.phi, cur.mu, cur.u
    else:
        phi_s = extrapolate_star(cur.phi, prev.phi, th)
        mu_s = extrapolate_star(cur.mu, prev.mu, th)
        u_s = extrapolate_star(cur.u, prev.u, th)
    h_bar, gamma = nonlinear_terms(grid, phi_s, params.phase)
    g_phi = g_u = 0.0
    if forcing is not None:
        g_phi, g_u = forcing(cur.t + th * dt)

    def theta_mix(x_new, x_old):
        return th * x_new + (1 - th) * x_old

    def rel(*terms):
        res = sum(terms)
        scale = max(float(np.max(np.abs(t))) for t in terms)
        return float(np.max(np.abs(res))) / max(scale, 1e-300)

    q_th = theta_mix(new.q, cur.q)
    r_th = theta_mix(new.r, cur.r)
    mu_th = theta_mix(new.mu, cur.mu)
    phi_th = theta_mix(new.phi, cur.phi)
    ut_th = theta_mix(new.u_tilde, cur.u)
    adv = grid.advect_scalar(u_s, phi_s)
    bdf_phi = (a * new.phi - b * cur.phi + c * prev.phi) / dt

    out = {}
    out["a"] = rel(bdf_phi, q_th * adv, params.mobility * mu_th, -np.broadcast_to(g_phi, bdf_phi.shape))
    out["b"] = rel(mu_th, params.lam * grid.laplacian(phi_th), -params.lam * (h_bar + gamma) * r_th)
    # scalar equations are scaled by their individual stencil terms
    rhs_r = 0.5 * grid.l2_inner(h_bar, a * new.phi - b * cur.phi + c * prev.phi)
    out["c"] = rel(*map(np.array, (a * new.r, -b * cur.r, c * prev.r, -rhs_r)))

    surf = fl.surface_tension(grid, phi_s, mu_s)
    conv = grid.convect(u_s) if fp.kind == "ns" else np.zeros_like(surf)
    bdf_u = kappa * (a * new.u_tilde - b * cur.u + c * prev.u) / dt
    drag = -fp.nu * grid.laplacian(ut_th) if fp.kind == "ns" else fp.alpha * fp.nu * ut_th
    terms_d = [bdf_u, q_th * conv, drag, grid.gradient(cur.p), q_th * surf, -np.broadcast_to(g_u, bdf_u.shape)]
    if fp.kind != "ns":
        terms_d.pop(1)
    out["d"] = rel(*terms_d)
    out["e"] = rel(kappa * a * (new.u - new.u_tilde) / dt, th * grid.gradient(new.p - cur.p))
    out["f"] = float(np.max(np.abs(grid.divergence(new.u)))) / (1.0 + float(np.max(np.abs(new.u))))
    rhs_q = grid.l2_inner(adv, mu_th) + grid.l2_inner(surf + conv, ut_th)
    out["g"] = rel(*map(np.array, (a * new.q / dt, -b * cur.q / dt, c * prev.q / dt, -rhs_q)))
    return out


# ----------------------------------------------------------------------
# driver


@dataclass
class Simulation:
    """
    Owns the two most recent levels of one run and yields diagnostics.

    Energy is logged from step 0 (single-level value) onwards.
    """

    grid: Grid
    params: ModelParams
    level0: Level
    forcing: Optional[Forcing] = None
    levels: list = field(default_factory=list)
    n: int = 0

    def __post_init__(self):
        self.levels = [self.level0]
        self.n = 0

    @property
    def current(self) -> Level:
        return self.levels[-1]

    def diagnostics(self, info: StepInfo | None) -> Diagnostics:
        cur = self.levels[-1]
        old = self.levels[-2] if len(self.levels) > 1 else cur
        g, p = self.grid, self.params
        div = float(np.max(np.abs(g.divergence(cur.u))))
        dev = 0.0
        if p.n_components > 2:
            dev = float(np.max(np.abs(cur.phi.sum(axis=0) - 1.0)))
        return Diagnostics(
            step=self.n,
            time=cur.t,
            modified_energy=modified_energy(g, cur, old, p),
            mass=total_mass(g, cur, p),
            q=cur.q,
            r=cur.r,
            max_div_u=div,
            margin_D=info.denominator if info else float("nan"),
            margin_q=info.margin_q if info else float("nan"),
            sum_deviation=dev,
        )

    def advance(self) -> tuple[Level, StepInfo]:
        if self.n == 0:
            new, info = bootstrap(self.grid, self.levels[-1], self.params, self.forcing)
        else:
            new, info = step(self.grid, self.levels[-2], self.levels[-1], self.params, self.forcing)
        self.levels = [self.levels[-1], new]
        self.n += 1
        return new, info

    def run(self, n_steps: int) -> Iterator[Diagnostics]:
        """Yield step-0 diagnostics, then one record per completed step."""
        if self.n == 0:
            yield self.diagnostics(None)
        for _ in range(n_steps):
            _, info = self.advance()
            yield self.diagnostics(info)
