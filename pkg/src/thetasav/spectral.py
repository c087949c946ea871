"""
Fourier pseudo-spectral operators on a uniform, doubly periodic 2D grid.

Fields are plain ``numpy`` arrays whose last two axes are ``(nx, ny)``; any
leading axes are treated as a batch, so a stack of phase fields with shape
``(K, nx, ny)`` is transformed in one call.  Vector fields carry their two
components on the axis just before the grid axes, i.e. ``(..., 2, nx, ny)``.

Odd-order derivatives use wavenumbers with the Nyquist mode zeroed, so
``gradient`` and ``divergence`` are exact negative adjoints of each other and
the projection Laplacian (``div . grad``) differs from the full Laplacian only
on the unresolved Nyquist modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Grid", "GridMismatchError", "CompatibilityError", "create_grid"]


class GridMismatchError(ValueError):
    """Raised when fields from different grids are combined."""


class CompatibilityError(ArithmeticError):
    """Raised when a periodic Poisson right-hand side has nonzero mean."""


@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic grid on ``[0, lx) x [0, ly)`` with FFT wavenumbers.

    Parameters
    ----------
    nx, ny : int
        Points per axis; even and at least 8.
    lx, ly : float
        Domain lengths.
    dealias : bool
        Apply the 2/3-rule to pseudo-spectral products. Off by default.
    """

    nx: int
    ny: int
    lx: float
    ly: float
    dealias: bool = False
    kx: np.ndarray = field(init=False, repr=False, compare=False)
    ky: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n!r}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain lengths must be positive")

        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.lx / self.nx)
        ky = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.ly / self.ny)
        ky_half = 2.0 * np.pi * np.fft.rfftfreq(self.ny, d=self.ly / self.ny)
        _set = object.__setattr__
        _set(self, "kx", kx)
        _set(self, "ky", ky)

        # rfft2 layout: axis -2 full (x), axis -1 half (y)
        KX = kx[:, None]
        KY = ky_half[None, :]
        k2 = KX**2 + KY**2
        kxd = KX.copy()
        kxd[self.nx // 2, 0] = 0.0
        kyd = KY.copy()
        kyd[0, self.ny // 2] = 0.0
        k2d = kxd**2 + kyd**2
        _set(self, "_ikx", 1j * kxd)
        _set(self, "_iky", 1j * kyd)
        _set(self, "_k2", k2)
        _set(self, "_k2d", k2d)

        # only the zero mode and the Nyquist lines are singular for div.grad
        inv_k2d = np.zeros_like(k2d)
        np.divide(-1.0, k2d, out=inv_k2d, where=k2d > 0)
        _set(self, "_inv_lap_proj", inv_k2d)
        inv_k2 = np.zeros_like(k2)
        np.divide(-1.0, k2, out=inv_k2, where=k2 > 0)
        _set(self, "_inv_lap", inv_k2)

        kx_cut = (2.0 / 3.0) * np.abs(kx).max()
        ky_cut = (2.0 / 3.0) * np.abs(ky).max()
        _set(self, "_mask23", (np.abs(KX) <= kx_cut) & (np.abs(KY) <= ky_cut))

        x = np.arange(self.nx) * (self.lx / self.nx)
        y = np.arange(self.ny) * (self.ly / self.ny)
        _set(self, "x", x)
        _set(self, "y", y)

    # ------------------------------------------------------------------
    # geometry
    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def cell_area(self) -> float:
        return self.lx * self.ly / (self.nx * self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(X, Y)`` with ``indexing='ij'``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f)[-2:] != self.shape:
                raise GridMismatchError(
                    f"field with trailing shape {np.shape(f)[-2:]} does not live on a {self.shape} grid"
                )

    # ------------------------------------------------------------------
    # transforms
    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(f, axes=(-2, -1))

    def to_physical(self, f_hat: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(f_hat, s=self.shape, axes=(-2, -1))

    def truncate(self, f: np.ndarray) -> np.ndarray:
        """2/3-rule low-pass of a physical field (identity unless ``dealias``)."""
        if not self.dealias:
            return f
        return self.to_physical(self.to_spectral(f) * self._mask23)

    # ------------------------------------------------------------------
    # differential operators
    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Spectral gradient; returns shape ``(..., 2, nx, ny)``."""
        self.check(f)
        f_hat = self.to_spectral(f)
        d_hat = np.stack([self._ikx * f_hat, self._iky * f_hat], axis=-3)
        return self.to_physical(d_hat)

    def divergence(self, v: np.ndarray) -> np.ndarray:
        self.check(v)
        v_hat = self.to_spectral(v)
        return self.to_physical(self._ikx * v_hat[..., 0, :, :] + self._iky * v_hat[..., 1, :, :])

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        self.check(f)
        return self.to_physical(-self._k2 * self.to_spectral(f))

    def advect_scalar(self, v: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Conservative advection ``div(v f)`` with products taken pointwise."""
        self.check(v, f)
        flux = v * np.asarray(f)[..., None, :, :]
        return self.truncate(self.divergence(flux))

    def convect(self, v: np.ndarray) -> np.ndarray:
        """``(v . grad) v`` with spectral derivatives and physical products."""
        self.check(v)
        grads = self.gradient(v)  # (..., comp, dir, nx, ny)
        out = grads[..., 0, :, :] * v[..., None, 0, :, :] + grads[..., 1, :, :] * v[..., None, 1, :, :]
        return self.truncate(out)

    def grad_inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """``(grad f, grad g)`` taken as ``(-lap f, g)`` with the full symbol.

        This is the pairing the phase-field Laplacian induces; it agrees with
        the pointwise product of ``gradient`` outputs except on Nyquist modes.
        """
        return self.l2_inner(-self.laplacian(f), g)

    # ------------------------------------------------------------------
    # constant-coefficient solvers
    def solve_helmholtz(self, a: float, b: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(a I - b lap) x = rhs`` by diagonal inversion."""
        if not a > 0:
            raise ValueError(f"Helmholtz shift must be positive, got a={a}")
        if b < 0:
            raise ValueError(f"Helmholtz diffusion must be non-negative, got b={b}")
        self.check(rhs)
        return self.to_physical(self.to_spectral(rhs) / (a + b * self._k2))

    def solve_poisson_mean_zero(
        self, rhs: np.ndarray, *, projection: bool = False, rtol: float = 1e-10
    ) -> np.ndarray:
        """
        Solve ``lap x = rhs`` under the zero-mean gauge.

        With ``projection=True`` the operator is ``div . grad`` (Nyquist-free
        derivative symbol), which makes a subsequent gradient correction
        remove the discrete divergence exactly.
        """
        self.check(rhs)
        rhs = np.asarray(rhs)
        scale = np.max(np.abs(rhs)) if rhs.size else 0.0
        m = np.mean(rhs, axis=(-2, -1))
        if np.any(np.abs(m) > rtol * scale):
            raise CompatibilityError(
                f"periodic Poisson rhs has mean {np.max(np.abs(m)):.3e} (max |rhs| {scale:.3e})"
            )
        inv = self._inv_lap_proj if projection else self._inv_lap
        return self.to_physical(self.to_spectral(rhs) * inv)

    # ------------------------------------------------------------------
    # quadrature
    def integral(self, f: np.ndarray) -> np.ndarray:
        self.check(f)
        return np.sum(f, axis=(-2, -1)) * self.cell_area

    def mean(self, f: np.ndarray) -> np.ndarray:
        self.check(f)
        return np.mean(f, axis=(-2, -1))

    def l2_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """L2 inner product summed over every leading axis."""
        self.check(f, g)
        if np.shape(f) != np.shape(g):
            raise GridMismatchError(f"shape mismatch {np.shape(f)} vs {np.shape(g)}")
        return float(np.vdot(f, g).real) * self.cell_area

    def linf_norm(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(f)))


def create_grid(nx: int, ny: int, lx: float, ly: float, dealias: bool = False) -> Grid:
    return Grid(nx, ny, lx, ly, dealias=dealias)
