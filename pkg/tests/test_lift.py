import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpsopt.lift import (
    DEFAULT_ELL,
    SobolevLift,
    lebesgue_gradient,
    sobolev_gradient,
    sobolev_index,
)
from lpsopt.spectral import (
    SpectralField,
    WavenumberGrid,
    conjugate_symmetry_defect,
    divergence_residual,
    inner_hs,
    inner_l2,
    irfft3,
)

from conftest import random_field, shear


def lattice_lq(vals, q):
    return float(np.mean(np.sum(vals**2, axis=0) ** (q / 2)) ** (1 / q))


class TestSobolevLift:
    def test_index(self):
        assert sobolev_index(4) == 0.75
        assert SobolevLift.for_q(4).s == 0.75
        assert SobolevLift.for_q(3).s == 0.5
        assert SobolevLift.for_q(9).s == pytest.approx(7 / 6)

    def test_validation(self):
        with pytest.raises(ValueError):
            SobolevLift(0.25)
        with pytest.raises(ValueError):
            SobolevLift(1.5)
        with pytest.raises(ValueError):
            SobolevLift(0.75, ell=0.0)
        with pytest.raises(ValueError):
            SobolevLift(0.75, symbol="other")

    def test_vanishing_length_scale_is_identity(self, grid16):
        g = random_field(grid16, 0)
        out = sobolev_gradient(g, SobolevLift(0.75, ell=1e-12))
        np.testing.assert_allclose(out.coeffs, g.coeffs, rtol=0, atol=1e-14 * np.max(np.abs(g.coeffs)))

    def test_unit_mode_halved(self, grid16):
        F = SobolevLift(0.75, ell=1.0).filter(grid16)
        assert F[0, 1, 0] == 0.5
        assert F[1, 0, 0] == 0.5
        assert F[0, 0, 0] == 0.0

    @pytest.mark.parametrize("symbol", ["printed", "laplacian"])
    def test_riesz_identity(self, grid16, symbol):
        lift = SobolevLift(0.75, DEFAULT_ELL, symbol)
        g = random_field(grid16, 1)
        gh = sobolev_gradient(g, lift)
        for seed in range(5):
            v = random_field(grid16, 100 + seed)
            lhs = inner_hs(gh, v, lift.s, lift.ell, symbol)
            assert lhs == pytest.approx(inner_l2(g, v), rel=1e-10)

    @given(st.floats(0.5, 1.49), st.floats(1e-3, 10.0))
    def test_filter_monotone(self, s, ell):
        grid = WavenumberGrid(16)
        F = SobolevLift(s, ell).filter(grid)
        assert np.all((F >= 0) & (F <= 1))
        nz = grid.kmag > 0
        order = np.argsort(grid.kmag[nz], kind="stable")
        assert np.all(np.diff(F[nz][order]) <= 1e-15)

    def test_preserves_structure(self, grid16):
        g = random_field(grid16, 2)
        out = sobolev_gradient(g, SobolevLift.for_q(5))
        assert divergence_residual(out) < 1e-14
        assert conjugate_symmetry_defect(out) < 1e-15


class TestLebesgueGradient:
    def test_rejects_bad_input(self, grid16):
        with pytest.raises(ValueError):
            lebesgue_gradient(random_field(grid16, 0), 1.5)
        with pytest.raises(ValueError):
            lebesgue_gradient(grid16.zeros(), 4)

    def test_q2_is_normalized_l2_gradient(self, grid16):
        g = random_field(grid16, 3, 7.0)
        sol = lebesgue_gradient(g, 2.0)
        expected = g.coeffs / np.sqrt(inner_l2(g, g))
        assert np.max(np.abs(sol.g.coeffs - expected)) < 1e-10 * np.max(np.abs(expected))
        assert max(sol.residuals.values()) < 1e-10
        assert np.max(np.abs(sol.grad_eta.coeffs)) < 1e-10 * np.sqrt(inner_l2(g, g))

    @pytest.mark.parametrize("q", [3.0, 4.0, 6.0, 9.0])
    def test_shear_closed_form(self, grid16, q):
        a = -2.5
        sol = lebesgue_gradient(shear(grid16, a), q)
        _, y, _ = grid16.coordinates()
        s = a * np.sin(2 * np.pi * y)
        s[np.isclose(np.abs(s), 0.0, atol=1e-12)] = 0.0  # exact zeros of the sine
        w = np.zeros((3,) + s.shape)
        w[0] = np.sign(s) * np.abs(s) ** (1 / (q - 1))
        w /= lattice_lq(w, q)
        got = irfft3(sol.g.coeffs, 16)
        assert np.max(np.abs(got - w)) < 1e-8
        assert np.max(np.abs(sol.grad_eta.coeffs)) < 1e-8 * abs(a)
        assert sol.mu < 0

    @settings(max_examples=5)
    @given(st.integers(0, 10**6), st.sampled_from([3.0, 4.0, 5.0]))
    def test_random_inputs(self, seed, q):
        grid = WavenumberGrid(8)
        gL2 = random_field(grid, seed, 3.0)
        sol = lebesgue_gradient(gL2, q)
        assert sol.converged
        assert max(sol.residuals.values()) < 1e-8
        g = irfft3(sol.g.coeffs, 8)
        assert lattice_lq(g, q) == pytest.approx(1.0, abs=1e-12)
        assert divergence_residual(sol.g) < 1e-10
        assert np.max(np.abs(sol.g.mean)) < 1e-14
        # ascent alignment
        assert inner_l2(gL2, sol.g) > 0

    @settings(max_examples=4)
    @given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
    def test_scale_equivariance(self, seed, c):
        grid = WavenumberGrid(8)
        gL2 = random_field(grid, seed)
        s1 = lebesgue_gradient(gL2, 4.0)
        s2 = lebesgue_gradient(gL2 * c, 4.0)
        np.testing.assert_allclose(s2.g.coeffs, s1.g.coeffs, rtol=0, atol=1e-9)
        assert s2.mu == pytest.approx(c * s1.mu, rel=1e-9)

    def test_pointwise_identity(self, grid16):
        gL2 = random_field(grid16, 4, 2.0)
        q = 4.0
        sol = lebesgue_gradient(gL2, q)
        g = irfft3(sol.g.coeffs, 16)
        b = irfft3(gL2.coeffs, 16)
        lhs = sol.mu * np.sum(g**2, axis=0) * g
        r = lhs + b - sol.potential_gradient
        assert np.max(np.abs(r)) / np.max(np.abs(b)) < 1e-6
