"""Spectral operators checked against analytic derivatives and Poisson solutions."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twophase.grid import Grid, MeanNotZeroError, NonFiniteFieldError

from conftest import rel, smooth_field

TWO_PI = 2 * np.pi


class TestGridConstruction:
    """Validation and geometry of the lattice descriptor."""

    def test_scalar_arguments_broadcast(self):
        g = Grid(3, 16)
        assert g.shape == (16, 16, 16)
        assert g.length == (1.0, 1.0, 1.0)
        assert g.cell_volume == pytest.approx(16.0**-3)
        assert g.volume == 1.0

    @pytest.mark.parametrize("n", [6, 9, 15])
    def test_rejects_small_or_odd(self, n):
        with pytest.raises(ValueError, match="even and >= 8"):
            Grid(1, n)

    def test_rejects_bad_dim(self):
        with pytest.raises(ValueError):
            Grid(4, 8)

    def test_modes_have_symmetric_layout(self):
        g = Grid(2, (8, 10))
        np.testing.assert_array_equal(g.modes[0], [0, 1, 2, 3, -4, -3, -2, -1])
        # last axis is stored half-complex
        np.testing.assert_array_equal(g.modes[1], [0, 1, 2, 3, 4, 5])

    def test_non_unit_length(self):
        g = Grid(1, 32, 2.0)
        x = g.coords[0]
        f = np.sin(np.pi * x)
        assert rel(g.gradient(f)[0], np.pi * np.cos(np.pi * x)) < 1e-12


class TestGradient:
    def test_constant(self, grid3):
        out = grid3.gradient(np.full(grid3.shape, 3.7))
        assert out.shape == (3, *grid3.shape)
        assert np.max(np.abs(out)) < 1e-13

    def test_sine_3d(self, grid3):
        x = grid3.coords
        out = grid3.gradient(np.sin(TWO_PI * x[0]))
        assert np.max(np.abs(out[0] - TWO_PI * np.cos(TWO_PI * x[0]))) < 1e-12
        assert np.max(np.abs(out[1:])) < 1e-12

    def test_diagonal_cosine(self, grid3):
        x = grid3.coords
        out = grid3.gradient(np.cos(TWO_PI * (x[0] + x[1])))
        expected = -TWO_PI * np.sin(TWO_PI * (x[0] + x[1]))
        assert np.max(np.abs(out[0] - expected)) < 1e-11
        assert np.max(np.abs(out[1] - expected)) < 1e-11
        assert np.max(np.abs(out[2])) < 1e-12

    def test_components_have_zero_mean(self, grid2, rng):
        out = grid2.gradient(rng.standard_normal(grid2.shape))
        assert np.all(np.abs(grid2.mean(out)) < 1e-14)

    def test_rejects_nan(self, grid1):
        f = np.zeros(grid1.shape)
        f[5] = np.nan
        with pytest.raises(NonFiniteFieldError, match="index"):
            grid1.gradient(f)


class TestDivergenceAndLaplacian:
    def test_divergence_of_constant(self, grid2):
        assert np.max(np.abs(grid2.divergence(np.ones((2, *grid2.shape))))) < 1e-13

    def test_divergence_of_gradient_of_sine(self, grid3):
        x = grid3.coords
        f = np.sin(TWO_PI * x[0])
        out = grid3.divergence(grid3.gradient(f))
        assert rel(out, -4 * np.pi**2 * f) < 1e-12

    def test_shear_is_divergence_free(self, grid3):
        x = grid3.coords
        w = np.zeros((3, *grid3.shape))
        w[0] = np.sin(TWO_PI * x[1])
        assert np.max(np.abs(grid3.divergence(w))) < 1e-12

    def test_divergence_needs_vector(self, grid2):
        with pytest.raises(ValueError):
            grid2.divergence(np.zeros(grid2.shape))

    def test_laplacian_single_modes(self, grid2):
        x = grid2.coords
        assert np.max(np.abs(grid2.laplacian(np.full(grid2.shape, 2.0)))) < 1e-12
        f = np.sin(TWO_PI * x[0])
        assert rel(grid2.laplacian(f), -4 * np.pi**2 * f) < 1e-12
        f = np.sin(TWO_PI * (x[0] + x[1]))
        assert rel(grid2.laplacian(f), -8 * np.pi**2 * f) < 1e-12

    def test_laplacian_componentwise(self, grid2):
        x = grid2.coords
        v = np.array([np.sin(TWO_PI * x[0]), np.cos(TWO_PI * x[1])])
        assert rel(grid2.laplacian(v), -4 * np.pi**2 * v) < 1e-12

    def test_integral_of_divergence_vanishes(self, grid3, rng):
        w = rng.standard_normal((3, *grid3.shape))
        assert abs(float(grid3.integrate(grid3.divergence(w)))) < 1e-13

    def test_div_grad_equals_laplacian(self, grid3, rng):
        f = grid3.dealias(rng.standard_normal(grid3.shape))
        assert rel(grid3.divergence(grid3.gradient(f)), grid3.laplacian(f)) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 2**32 - 1))
    def test_linearity(self, a, b, seed):
        g = Grid(2, 16)
        r = np.random.default_rng(seed)
        f, h = r.standard_normal((2, *g.shape))
        for op in (g.laplacian, g.gradient):
            lhs = op(a * f + b * h)
            rhs = a * op(f) + b * op(h)
            scale = max(np.max(np.abs(rhs)), np.max(np.abs(op(f))) + np.max(np.abs(op(h))))
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale * (1 + abs(a) + abs(b))


class TestLame:
    def test_constant(self, grid3):
        assert np.max(np.abs(grid3.lame(np.ones((3, *grid3.shape)), 1.0, 0.0))) < 1e-12

    def test_divergence_free_branch(self, grid3):
        x = grid3.coords
        v = np.zeros((3, *grid3.shape))
        v[0] = np.sin(TWO_PI * x[1])
        assert rel(grid3.lame(v, 1.0, 0.0), 4 * np.pi**2 * v) < 1e-12

    def test_gradient_branch(self, grid3):
        x = grid3.coords
        v = grid3.gradient(np.sin(TWO_PI * x[0]))
        assert rel(grid3.lame(v, 1.0, 1.0), 3 * 4 * np.pi**2 * v) < 1e-12

    def test_lambda_minus_mu_divergence_free(self, grid2, rng):
        # curl of a stream function is divergence-free
        psi = smooth_field(grid2, rng)
        d = grid2.gradient(psi)
        v = np.array([d[1], -d[0]])
        assert rel(grid2.lame(v, 0.7, -0.7), -0.7 * grid2.laplacian(v)) < 1e-12

    def test_symbol_matches_operator(self, grid2, rng):
        v = rng.standard_normal((2, *grid2.shape))
        m = grid2.lame_symbol(0.3, 0.1)
        v_hat = grid2.fft(v)
        via_symbol = grid2.ifft(np.einsum("ij...,j...->i...", m, v_hat))
        assert rel(via_symbol, grid2.lame(v, 0.3, 0.1)) < 1e-12

    @pytest.mark.parametrize("mu, lam", [(0.0, 1.0), (-1.0, 5.0), (0.1, -0.3)])
    def test_rejects_bad_parameters(self, grid1, mu, lam):
        with pytest.raises(ValueError, match="mu > 0"):
            grid1.lame(np.zeros((1, *grid1.shape)), mu, lam)


class TestInverseLaplacian:
    def test_zero(self, grid2):
        assert np.all(grid2.invert_laplacian_mean_zero(np.zeros(grid2.shape)) == 0)

    def test_cosine(self, grid3):
        x = grid3.coords
        out = grid3.invert_laplacian_mean_zero(np.cos(TWO_PI * x[0]))
        assert rel(out, -np.cos(TWO_PI * x[0]) / (4 * np.pi**2)) < 1e-12

    def test_diagonal_sine(self, grid2):
        x = grid2.coords
        out = grid2.invert_laplacian_mean_zero(np.sin(TWO_PI * (x[0] + x[1])))
        assert rel(out, -np.sin(TWO_PI * (x[0] + x[1])) / (8 * np.pi**2)) < 1e-12

    def test_right_inverse(self, grid3, rng):
        f = grid3.dealias(rng.standard_normal(grid3.shape))
        f -= grid3.mean(f)
        phi = grid3.invert_laplacian_mean_zero(f)
        assert abs(float(grid3.mean(phi))) < 1e-15
        assert rel(grid3.laplacian(phi), f) < 1e-10

    def test_nonzero_mean_rejected(self, grid1):
        with pytest.raises(MeanNotZeroError, match="mean 1.000e\\+00"):
            grid1.invert_laplacian_mean_zero(np.ones(grid1.shape))


class TestDealias:
    def test_retained_band_unchanged(self, grid2):
        x = grid2.coords
        f = np.cos(TWO_PI * 10 * x[0]) + np.sin(TWO_PI * 3 * x[1])
        assert rel(grid2.dealias(f), f) < 1e-13

    def test_highest_mode_removed(self, grid1):
        f = np.cos(np.pi * np.arange(grid1.shape[0]))
        assert np.max(np.abs(grid1.dealias(f))) < 1e-15

    def test_idempotent(self, grid3, rng):
        once = grid3.dealias(rng.standard_normal(grid3.shape))
        np.testing.assert_allclose(grid3.dealias(once), once, atol=1e-14)

    def test_batched_stack(self, grid2, rng):
        stack = rng.standard_normal((3, 2, *grid2.shape))
        out = grid2.dealias(stack)
        np.testing.assert_allclose(out[1, 0], grid2.dealias(stack[1, 0]), atol=1e-14)
