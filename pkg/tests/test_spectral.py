"""
Tests for the pseudo-spectral grid.

Analytic eigenfunctions pin the operators; sixth-order finite differences
act as an independent oracle for the derivative and product operators.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thetasav.spectral import CompatibilityError, GridMismatchError, create_grid

from conftest import band_limited, divergence_free, fd6

PI = np.pi


class TestCreateGrid:
    def test_wavenumbers_follow_fft_convention(self):
        g = create_grid(8, 8, 2.0, 2.0)
        expected = (2 * PI / 2) * np.array([0, 1, 2, 3, -4, -3, -2, -1])
        np.testing.assert_allclose(g.kx, expected)
        np.testing.assert_allclose(g.ky, expected)

    def test_unit_domain_spacing(self):
        g = create_grid(8, 8, 1.0, 1.0)
        assert g.kx[1] - g.kx[0] == pytest.approx(2 * PI)

    def test_reference_mesh(self):
        g = create_grid(128, 128, 2.0, 2.0)
        assert g.shape == (128, 128)
        assert g.area == pytest.approx(4.0)

    @pytest.mark.parametrize("nx", [7, 6, 0, -8, 9])
    def test_rejects_bad_sizes(self, nx):
        with pytest.raises(ValueError, match="even integer"):
            create_grid(nx, 8, 1.0, 1.0)

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError, match="positive"):
            create_grid(8, 8, 0.0, 1.0)

    def test_frozen(self):
        g = create_grid(8, 8, 1.0, 1.0)
        with pytest.raises(AttributeError):
            g.nx = 16


class TestTransforms:
    @settings(max_examples=25, deadline=None)
    @given(n=st.sampled_from([8, 16, 32, 64, 128]), seed=st.integers(0, 2**32 - 1))
    def test_round_trip(self, n, seed):
        g = create_grid(n, n, 2.0, 3.0)
        f = np.random.default_rng(seed).normal(size=(2, n, n))
        back = g.to_physical(g.to_spectral(f))
        assert np.max(np.abs(back - f)) <= 1e-13 * np.max(np.abs(f))

    def test_truncate_is_identity_without_dealias(self, grid):
        f = np.random.default_rng(0).normal(size=grid.shape)
        assert grid.truncate(f) is f

    def test_truncate_removes_high_modes(self):
        g = create_grid(32, 32, 2.0, 2.0, dealias=True)
        X, Y = g.mesh()
        low = np.sin(PI * X)
        high = np.cos(15 * PI * X)
        np.testing.assert_allclose(g.truncate(low + high), low, atol=1e-13)


class TestGradient:
    def test_constant(self, grid):
        np.testing.assert_allclose(grid.gradient(np.full(grid.shape, 3.0)), 0.0, atol=1e-13)

    def test_sine(self, grid):
        X, Y = grid.mesh()
        d = grid.gradient(np.sin(PI * X))
        np.testing.assert_allclose(d[0], PI * np.cos(PI * X), atol=1e-12)
        np.testing.assert_allclose(d[1], 0.0, atol=1e-12)

    def test_batch_shape(self, grid):
        assert grid.gradient(np.zeros((3,) + grid.shape)).shape == (3, 2) + grid.shape

    def test_sixth_order_fd_oracle(self):
        errs = []
        for n in (64, 128):
            g = create_grid(n, n, 2.0, 2.0)
            f = band_limited(g, np.random.default_rng(1), kmax=3)
            d = g.gradient(f)
            h = g.lx / n
            errs.append(max(np.max(np.abs(d[0] - fd6(f, h, 0))), np.max(np.abs(d[1] - fd6(f, h, 1)))))
        assert errs[1] < 1e-5
        assert errs[0] / errs[1] > 40  # 2^6 = 64


class TestDivergenceLaplacian:
    def test_constant_vector(self, grid):
        v = np.ones((2,) + grid.shape) * np.array([1.5, -2.0])[:, None, None]
        np.testing.assert_allclose(grid.divergence(v), 0.0, atol=1e-13)

    def test_div_grad_is_laplacian(self, grid):
        f = band_limited(grid, np.random.default_rng(2))
        lap = grid.laplacian(f)
        assert np.max(np.abs(grid.divergence(grid.gradient(f)) - lap)) <= 1e-12 * np.max(np.abs(lap))

    def test_manufactured_velocity_is_solenoidal(self, grid):
        X, Y = grid.mesh()
        v = np.stack([PI * np.sin(2 * PI * Y) * np.sin(PI * X) ** 2, -PI * np.sin(2 * PI * X) * np.sin(PI * Y) ** 2])
        np.testing.assert_allclose(grid.divergence(v), 0.0, atol=1e-12)

    def test_laplacian_eigenfunction(self, grid):
        X, Y = grid.mesh()
        f = np.sin(PI * X) * np.sin(PI * Y)
        np.testing.assert_allclose(grid.laplacian(f), -2 * PI**2 * f, atol=1e-11)

    def test_laplacian_constant(self, grid):
        np.testing.assert_allclose(grid.laplacian(np.full(grid.shape, 7.0)), 0.0, atol=1e-12)

    def test_grid_mismatch(self, grid):
        with pytest.raises(GridMismatchError):
            grid.laplacian(np.zeros((32, 32)))


class TestProducts:
    def test_advect_zero_velocity(self, grid):
        f = band_limited(grid, np.random.default_rng(3))
        np.testing.assert_allclose(grid.advect_scalar(np.zeros((2,) + grid.shape), f), 0.0, atol=1e-14)

    def test_advect_unit_scalar_by_solenoidal(self, grid):
        v = divergence_free(grid, np.random.default_rng(4))
        np.testing.assert_allclose(grid.advect_scalar(v, np.ones(grid.shape)), 0.0, atol=1e-12)

    def test_advect_fd_oracle(self):
        errs = []
        for n in (64, 128):
            g = create_grid(n, n, 2.0, 2.0)
            rng = np.random.default_rng(5)
            v = band_limited(g, rng, kmax=2, batch=(2,))
            f = band_limited(g, rng, kmax=2)
            h = g.lx / n
            oracle = fd6(v[0] * f, h, 0) + fd6(v[1] * f, h, 1)
            errs.append(np.max(np.abs(g.advect_scalar(v, f) - oracle)))
        assert errs[1] < 1e-4
        assert errs[0] / errs[1] > 40

    def test_convect_constant(self, grid):
        v = np.ones((2,) + grid.shape)
        np.testing.assert_allclose(grid.convect(v), 0.0, atol=1e-13)

    def test_convect_shear(self, grid):
        X, Y = grid.mesh()
        v = np.stack([np.sin(2 * PI * Y / grid.ly), np.zeros(grid.shape)])
        np.testing.assert_allclose(grid.convect(v), 0.0, atol=1e-12)

    def test_convect_fd_oracle(self):
        errs = []
        for n in (64, 128):
            g = create_grid(n, n, 2.0, 2.0)
            v = band_limited(g, np.random.default_rng(6), kmax=2, batch=(2,))
            h = g.lx / n
            oracle = np.stack([v[0] * fd6(v[i], h, 0) + v[1] * fd6(v[i], h, 1) for i in range(2)])
            errs.append(np.max(np.abs(g.convect(v) - oracle)))
        assert errs[1] < 1e-4
        assert errs[0] / errs[1] > 40

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_zero_energy_pairing(self, seed):
        # (div(V f), g) + (f grad g, V) = 0 for solenoidal V
        g = create_grid(32, 32, 2.0, 2.0)
        rng = np.random.default_rng(seed)
        v = divergence_free(g, rng)
        f = rng.normal(size=g.shape)
        h = rng.normal(size=g.shape)
        a = g.l2_inner(g.advect_scalar(v, f), h)
        b = g.l2_inner(f * g.gradient(h), v)
        scale = np.sqrt(g.l2_inner(v, v) * g.l2_inner(f, f) * g.l2_inner(h, h)) + 1.0
        assert abs(a + b) <= 1e-11 * scale


class TestSolvers:
    def test_helmholtz_identity(self, grid):
        np.testing.assert_allclose(grid.solve_helmholtz(1.0, 0.0, np.full(grid.shape, 2.5)), 2.5)

    def test_helmholtz_eigenfunction(self, grid):
        X, Y = grid.mesh()
        s = np.sin(PI * X) * np.sin(PI * Y)
        np.testing.assert_allclose(grid.solve_helmholtz(1.0, 1.0, (1 + 2 * PI**2) * s), s, atol=1e-13)

    @settings(max_examples=100, deadline=None)
    @given(
        a=st.floats(0.1, 100.0),
        b=st.floats(0.0, 10.0),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_helmholtz_residual(self, a, b, seed):
        g = create_grid(32, 32, 2.0, 2.0)
        rhs = np.random.default_rng(seed).normal(size=g.shape)
        x = g.solve_helmholtz(a, b, rhs)
        res = a * x - b * g.laplacian(x) - rhs
        assert np.max(np.abs(res)) <= 1e-12 * np.max(np.abs(rhs))

    def test_helmholtz_rejects_bad_coefficients(self, grid):
        with pytest.raises(ValueError):
            grid.solve_helmholtz(0.0, 1.0, np.zeros(grid.shape))
        with pytest.raises(ValueError):
            grid.solve_helmholtz(1.0, -1.0, np.zeros(grid.shape))

    def test_poisson_zero(self, grid):
        np.testing.assert_array_equal(grid.solve_poisson_mean_zero(np.zeros(grid.shape)), 0.0)

    def test_poisson_eigenfunction(self, grid):
        X, Y = grid.mesh()
        s = np.sin(PI * X) * np.sin(PI * Y)
        np.testing.assert_allclose(grid.solve_poisson_mean_zero(-2 * PI**2 * s), s, atol=1e-13)

    @pytest.mark.parametrize("projection", [False, True])
    def test_poisson_residual_of_divergence(self, grid, projection):
        v = np.random.default_rng(7).normal(size=(2,) + grid.shape)
        rhs = grid.divergence(v)
        x = grid.solve_poisson_mean_zero(rhs, projection=projection)
        lap = grid.divergence(grid.gradient(x)) if projection else grid.laplacian(x)
        assert np.max(np.abs(lap - rhs)) <= 1e-12 * np.max(np.abs(rhs))
        assert abs(np.mean(x)) <= 1e-14 * np.max(np.abs(x))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_poisson_mean_zero_property(self, seed):
        g = create_grid(16, 32, 1.0, 3.0)
        rhs = np.random.default_rng(seed).normal(size=g.shape)
        rhs -= rhs.mean()
        x = g.solve_poisson_mean_zero(rhs)
        assert abs(np.mean(x)) <= 1e-14 * np.max(np.abs(x))

    def test_poisson_incompatible_rhs(self, grid):
        with pytest.raises(CompatibilityError):
            grid.solve_poisson_mean_zero(np.ones(grid.shape))


class TestQuadrature:
    def test_integral_of_one(self, grid):
        assert grid.integral(np.ones(grid.shape)) == pytest.approx(4.0)

    def test_integral_of_sine(self, grid):
        X, _ = grid.mesh()
        assert abs(grid.integral(np.sin(PI * X))) < 1e-13

    def test_mean_and_linf(self, grid):
        f = np.random.default_rng(8).normal(size=grid.shape)
        assert grid.mean(f) == pytest.approx(grid.integral(f) / grid.area)
        assert grid.linf_norm(f) == np.max(np.abs(f))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_l2_inner_nonnegative(self, seed):
        g = create_grid(16, 16, 2.0, 2.0)
        f = np.random.default_rng(seed).normal(size=(3,) + g.shape)
        assert g.l2_inner(f, f) >= 0.0

    def test_l2_inner_shape_mismatch(self, grid):
        with pytest.raises(GridMismatchError):
            grid.l2_inner(np.zeros((2,) + grid.shape), np.zeros(grid.shape))

    def test_grad_inner_matches_pointwise_pairing(self, grid):
        rng = np.random.default_rng(9)
        f, h = band_limited(grid, rng), band_limited(grid, rng)
        assert grid.grad_inner(f, h) == pytest.approx(grid.l2_inner(grid.gradient(f), grid.gradient(h)), rel=1e-12)
