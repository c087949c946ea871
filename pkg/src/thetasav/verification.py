"""
Manufactured solutions, convergence measurement and the experiment drivers.

The manufactured phase fields all have the form
``phi_k = A_k + B_k cos(t) sin(pi x) sin(pi y)`` on ``[0, 2]^2``, which lets
the domain mean of the cubic ``f(phi_k)`` be written in closed form from the
moments of ``S = sin(pi x) sin(pi y)`` (mean 0, mean square 1/4, mean cube 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .coupler import Diagnostics, Level, ModelParams, Simulation, initial_level
from .spectral import Grid, create_grid

__all__ = [
    "ExactSolution",
    "two_component_solution",
    "three_component_solution",
    "manufactured_forcing",
    "linf_error",
    "observed_order",
    "ConvergenceReport",
    "run_convergence",
    "run_convergence_study",
    "random_ic",
    "count_phase_regions",
    "REFERENCE_DTS",
    "CONVERGENCE_PARAMS",
]

PI = math.pi
REFERENCE_DTS = (1e-3, 5e-4, 2.5e-4, 1.25e-4, 6.25e-5, 3.125e-5)
CONVERGENCE_PARAMS = dict(alpha=1000.0, tau=1.0, nu=1.0, lam=0.01, eps=0.05, mobility=10.0, c_shift=10.0)


@dataclass(frozen=True)
class ExactSolution:
    """
    Smooth periodic solution on ``[0, 2]^2``.

    ``amplitude[k]`` and ``offset[k]`` describe every stored phase field;
    for three components the last entry is ``1 - phi_1 - phi_2``.  ``flow``
    scales the velocity and pressure.
    """

    offset: tuple
    amplitude: tuple
    n_components: int
    flow: float = 1.0

    @property
    def n_fields(self) -> int:
        return len(self.offset)

    def phi(self, x, y, t):
        s = np.sin(PI * x) * np.sin(PI * y)
        return np.stack([a + b * np.cos(t) * s for a, b in zip(self.offset, self.amplitude)])

    def phi_t(self, x, y, t):
        s = np.sin(PI * x) * np.sin(PI * y)
        return np.stack([-b * np.sin(t) * s for b in self.amplitude])

    def grad_phi(self, x, y, t):
        gx = PI * np.cos(PI * x) * np.sin(PI * y)
        gy = PI * np.sin(PI * x) * np.cos(PI * y)
        return np.stack([b * np.cos(t) * np.stack([gx, gy]) for b in self.amplitude])

    def lap_phi(self, x, y, t):
        offset = np.reshape(self.offset, (-1,) + (1,) * np.ndim(x))
        return -2 * PI**2 * (self.phi(x, y, t) - offset)

    def u(self, x, y, t):
        st = self.flow * np.sin(t)
        return np.stack(
            [
                PI * st * np.sin(2 * PI * y) * np.sin(PI * x) ** 2,
                -PI * st * np.sin(2 * PI * x) * np.sin(PI * y) ** 2,
            ]
        )

    def u_t(self, x, y, t):
        ct = self.flow * np.cos(t)
        return np.stack(
            [
                PI * ct * np.sin(2 * PI * y) * np.sin(PI * x) ** 2,
                -PI * ct * np.sin(2 * PI * x) * np.sin(PI * y) ** 2,
            ]
        )

    def grad_u(self, x, y, t):
        """Array ``[i, j] = d u_i / d x_j``."""
        st = self.flow * np.sin(t)
        ux = PI**2 * st * np.sin(2 * PI * y) * np.sin(2 * PI * x)
        uy = 2 * PI**2 * st * np.cos(2 * PI * y) * np.sin(PI * x) ** 2
        vx = -2 * PI**2 * st * np.cos(2 * PI * x) * np.sin(PI * y) ** 2
        vy = -PI**2 * st * np.sin(2 * PI * x) * np.sin(2 * PI * y)
        return np.stack([np.stack([ux, uy]), np.stack([vx, vy])])

    def lap_u(self, x, y, t):
        st = self.flow * np.sin(t)
        return np.stack(
            [
                2 * PI**3 * st * np.sin(2 * PI * y) * (2 * np.cos(2 * PI * x) - 1),
                -2 * PI**3 * st * np.sin(2 * PI * x) * (2 * np.cos(2 * PI * y) - 1),
            ]
        )

    def p(self, x, y, t):
        return self.flow * np.sin(t) * np.cos(PI * x) * np.sin(PI * y)

    def grad_p(self, x, y, t):
        st = self.flow * np.sin(t)
        return np.stack([-PI * st * np.sin(PI * x) * np.sin(PI * y), PI * st * np.cos(PI * x) * np.cos(PI * y)])

    def mean_f(self, t, eps):
        """Domain mean of f(phi_k) for each stored field, exactly."""
        out = []
        for a, b in zip(self.offset, self.amplitude):
            bb = b * np.cos(t)
            m1 = a
            m2 = a * a + bb * bb / 4
            m3 = a**3 + 3 * a * bb * bb / 4
            out.append((m3 - 1.5 * m2 + 0.5 * m1) / eps**2)
        return np.array(out)

    def on_grid(self, grid: Grid, t: float):
        X, Y = grid.mesh()
        return self.phi(X, Y, t), self.u(X, Y, t), self.p(X, Y, t)


def two_component_solution() -> ExactSolution:
    return ExactSolution((0.5,), (0.5,), 2)


def three_component_solution() -> ExactSolution:
    return ExactSolution((0.3, 0.3, 0.4), (0.01, 0.02, -0.03), 3)


def _chemical_potential(exact: ExactSolution, x, y, t, params: ModelParams):
    """mu_k and grad mu_k of the exact solution (with both multipliers)."""
    eps, lam = params.eps, params.lam
    phi = exact.phi(x, y, t)
    gphi = exact.grad_phi(x, y, t)
    f = phi * (phi - 0.5) * (phi - 1.0) / eps**2
    fp = (3 * phi**2 - 3 * phi + 0.5) / eps**2
    mf = exact.mean_f(t, eps).reshape((-1,) + (1,) * np.ndim(x))
    f_bar = f - mf
    grad_f = fp[:, None] * gphi
    lap = exact.lap_phi(x, y, t)
    if exact.n_components > 2:
        beta = -f_bar.mean(axis=0)
        grad_beta = -grad_f.mean(axis=0)
    else:
        beta = 0.0
        grad_beta = 0.0
    mu = lam * (-lap + f_bar + beta)
    grad_mu = lam * (2 * PI**2 * gphi + grad_f + grad_beta)
    return phi, mu, grad_mu


def manufactured_forcing(exact: ExactSolution, x, y, t: float, params: ModelParams):
    """
    Residuals of the exact fields in the continuous equations.

    Returns ``(g_phi, g_u)`` with shapes ``(K, ...)`` and ``(2, ...)``.
    """
    phi, mu, grad_mu = _chemical_potential(exact, x, y, t, params)
    u = exact.u(x, y, t)
    gphi = exact.grad_phi(x, y, t)
    advect = np.einsum("d...,kd...->k...", u, gphi)  # div(u phi) = u . grad phi
    g_phi = exact.phi_t(x, y, t) + advect + params.mobility * mu

    surf = np.einsum("k...,kd...->d...", phi, grad_mu)
    if params.kind == "ns":
        conv = np.einsum("j...,ij...->i...", u, exact.grad_u(x, y, t))
        g_u = exact.u_t(x, y, t) + conv - params.nu * exact.lap_u(x, y, t) + exact.grad_p(x, y, t) + surf
    else:
        g_u = params.tau * exact.u_t(x, y, t) + params.alpha * params.nu * u + exact.grad_p(x, y, t) + surf
    return g_phi, g_u


def grid_forcing(exact: ExactSolution, grid: Grid, params: ModelParams):
    """Forcing callback ``t -> (g_phi, g_u)`` sampled on ``grid``."""
    X, Y = grid.mesh()

    def forcing(t):
        return manufactured_forcing(exact, X, Y, t, params)

    return forcing


def linf_error(numeric, exact) -> float:
    numeric = np.asarray(numeric)
    exact = np.asarray(exact)
    if numeric.shape != exact.shape:
        raise ValueError(f"shape mismatch {numeric.shape} vs {exact.shape}")
    return float(np.max(np.abs(numeric - exact)))


def observed_order(errors: Sequence[float], dts: Sequence[float], floor: float = 1e-14) -> list:
    """log(e_i/e_{i+1}) / log(dt_i/dt_{i+1}); NaN where either error is below ``floor``."""
    if len(errors) != len(dts) or len(errors) < 2:
        raise ValueError("need matching error/dt lists of length >= 2")
    out = []
    for i in range(len(errors) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if e0 < floor or e1 < floor:
            out.append(float("nan"))
        else:
            out.append(math.log(e0 / e1) / math.log(dts[i] / dts[i + 1]))
    return out


@dataclass
class ConvergenceReport:
    kind: str
    n_components: int
    theta: float
    dts: list = field(default_factory=list)
    err_phi: list = field(default_factory=list)
    err_u: list = field(default_factory=list)
    err_p: list = field(default_factory=list)

    def orders(self, which: str) -> list:
        return observed_order(getattr(self, f"err_{which}"), self.dts)

    def rows(self):
        op, ou, opp = self.orders("phi"), self.orders("u"), self.orders("p")
        for i, dt in enumerate(self.dts):
            o = (float("nan"),) * 3 if i == 0 else (op[i - 1], ou[i - 1], opp[i - 1])
            yield (self.kind, self.n_components, self.theta, dt, self.err_phi[i], self.err_u[i], self.err_p[i]) + o

    def to_csv(self, path, append: bool = False) -> None:
        header = "model,components,theta,dt,err_phi,err_u,err_p,order_phi,order_u,order_p\n"
        with open(path, "a" if append else "w") as fh:
            if not append:
                fh.write(header)
            for row in self.rows():
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def run_convergence(exact: ExactSolution, grid: Grid, params: ModelParams, t_final: float = 0.1, exact_start=False):
    """
    One manufactured run to ``t_final``; returns L-inf errors of phi, u, p.

    With ``exact_start`` the exact solution at ``t = dt`` replaces the
    first-order start-up step.
    """
    n_steps = int(round(t_final / params.dt))
    if not math.isclose(n_steps * params.dt, t_final, rel_tol=1e-9):
        raise ValueError("t_final must be a multiple of dt")
    forcing = grid_forcing(exact, grid, params)
    phi0, u0, p0 = exact.on_grid(grid, 0.0)
    sim = Simulation(grid, params, initial_level(grid, phi0, u0, p0, params), forcing)
    if exact_start:
        phi1, u1, p1 = exact.on_grid(grid, params.dt)
        lvl1 = initial_level(grid, phi1, u1, p1, params, t0=params.dt)
        lvl1.p = p1
        sim.levels = [sim.level0, lvl1]
        sim.n = 1
        n_steps -= 1
    for _ in range(n_steps):
        sim.advance()
    cur = sim.current
    phi_e, u_e, p_e = exact.on_grid(grid, cur.t)
    return linf_error(cur.phi, phi_e), linf_error(cur.u, u_e), linf_error(cur.p, p_e)


def run_convergence_study(
    kind: str,
    n_components: int,
    thetas: Iterable[float],
    dts: Sequence[float] = REFERENCE_DTS[:5],
    grid: Grid | None = None,
    t_final: float = 0.1,
    exact_start: bool = False,
    **overrides,
) -> list:
    """Manufactured-solution temporal convergence, one report per theta."""
    grid = grid or create_grid(64, 64, 2.0, 2.0)
    exact = two_component_solution() if n_components == 2 else three_component_solution()
    base = dict(CONVERGENCE_PARAMS)
    base.update(overrides)
    reports = []
    for theta in thetas:
        rep = ConvergenceReport(kind, n_components, theta)
        for dt in dts:
            params = ModelParams(n_components=n_components, kind=kind, theta=theta, dt=dt, **base)
            ep, eu, epp = run_convergence(exact, grid, params, t_final, exact_start)
            rep.dts.append(dt)
            rep.err_phi.append(ep)
            rep.err_u.append(eu)
            rep.err_p.append(epp)
        reports.append(rep)
    return reports


# ----------------------------------------------------------------------
# random initial data and morphology


IC_KINDS = ("2comp", "3comp", "3comp-independent")


def random_ic(kind: str, seed: int, grid: Grid):
    """
    Randomised initial data.

    ``2comp``: phi uniform in [0, 1), u = v = p = 1.
    ``3comp``: phi_1, phi_2 = 1/3 + 0.01(2 rand - 1), phi_3 = 1 - phi_1 - phi_2, zero flow.
    ``3comp-independent``: all three phases perturbed independently, zero flow.
    """
    rng = np.random.default_rng(seed)
    shape = grid.shape
    if kind == "2comp":
        phi = rng.random((1,) + shape)
        return phi, np.ones((2,) + shape), np.ones(shape)
    if kind == "3comp":
        p12 = 1.0 / 3.0 + 0.01 * (2.0 * rng.random((2,) + shape) - 1.0)
        phi = np.concatenate([p12, (1.0 - p12[0] - p12[1])[None]])
    elif kind == "3comp-independent":
        phi = 1.0 / 3.0 + 0.01 * (2.0 * rng.random((3,) + shape) - 1.0)
    else:
        raise ValueError(f"unknown initial-condition kind {kind!r}; expected one of {IC_KINDS}")
    return phi, np.zeros((2,) + shape), np.zeros(shape)


def _periodic_label_count(mask: np.ndarray) -> int:
    labels, n = ndimage.label(mask)
    if n == 0:
        return 0
    parent = list(range(n + 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in ((labels[0, :], labels[-1, :]), (labels[:, 0], labels[:, -1])):
        for i, j in zip(a, b):
            if i and j:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    return len({find(i) for i in range(1, n + 1)})


def count_phase_regions(phi: np.ndarray, min_cells: int = 1) -> int:
    """
    Connected regions (periodic, 4-neighbour) of the dominant phase map.

    A binary order parameter is split at 1/2.  Regions smaller than
    ``min_cells`` are ignored.
    """
    phi = np.asarray(phi)
    if phi.shape[0] == 1:
        dominant = (phi[0] >= 0.5).astype(int)
        n_phase = 2
    else:
        dominant = np.argmax(phi, axis=0)
        n_phase = phi.shape[0]
    total = 0
    for k in range(n_phase):
        mask = dominant == k
        if min_cells > 1:
            labels, n = ndimage.label(mask)
            sizes = ndimage.sum(mask, labels, range(1, n + 1))
            small = np.isin(labels, 1 + np.flatnonzero(np.asarray(sizes) < min_cells))
            mask = mask & ~small
        total += _periodic_label_count(mask)
    return total
