import numpy as np
import pytest

from thetasav import create_grid


@pytest.fixture
def grid():
    return create_grid(64, 64, 2.0, 2.0)


@pytest.fixture
def small_grid():
    return create_grid(32, 32, 2.0, 2.0)


def band_limited(grid, rng, kmax=4, batch=()):
    """Random smooth periodic field built from the lowest Fourier modes."""
    X, Y = grid.mesh()
    out = np.zeros(batch + grid.shape)
    for i in range(-kmax, kmax + 1):
        for j in range(-kmax, kmax + 1):
            amp = rng.normal(size=batch + (1, 1)) / (1 + i * i + j * j)
            ph = rng.uniform(0, 2 * np.pi, size=batch + (1, 1))
            out = out + amp * np.cos(2 * np.pi * (i * X / grid.lx + j * Y / grid.ly) + ph)
    return out


def fd6(f, h, axis):
    """Sixth-order central first derivative on a periodic axis."""
    r = lambda s: np.roll(f, -s, axis=axis)
    return (-r(-3) + 9 * r(-2) - 45 * r(-1) + 45 * r(1) - 9 * r(2) + r(3)) / (60 * h)


def divergence_free(grid, rng, kmax=3):
    """Random divergence-free field from a stream function."""
    psi = band_limited(grid, rng, kmax)
    d = grid.gradient(psi)
    return np.stack([d[1], -d[0]])


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    def report(line):
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
