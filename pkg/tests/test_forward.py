import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpsopt.forward import (
    ALPHA,
    BETA,
    GAMMA,
    NODES,
    ZETA,
    SolverConfig,
    advection_coeffs,
    integrate,
    linear_amplification,
    nonlinear_term,
    step_imex,
    viscous_symbol,
)
from lpsopt.spectral import (
    NotSolenoidalError,
    PhysicalField,
    SpectralField,
    WavenumberGrid,
    divergence_residual,
    kinetic_energy,
    norm_lq,
    to_spectral,
)

from conftest import random_field, shear, taylor_green


class TestScheme:
    def test_coefficients_are_locked(self):
        assert ALPHA == (29 / 96, -3 / 40, 1 / 6)
        assert BETA == (37 / 160, 5 / 24, 1 / 6)
        assert GAMMA == (8 / 15, 5 / 12, 3 / 4)
        assert ZETA == (0.0, -17 / 60, -5 / 12)
        assert NODES == (0.0, 8 / 15, 2 / 3)

    def test_substage_consistency(self):
        # implicit and explicit weights advance the same fraction of the step
        for s in range(3):
            assert ALPHA[s] + BETA[s] == pytest.approx(GAMMA[s] + ZETA[s], abs=1e-15)
        assert sum(GAMMA) + sum(ZETA) == pytest.approx(1.0, abs=1e-15)

    @given(st.floats(1e-6, 1e-2))
    def test_linear_factor_is_second_order(self, z):
        lam = -1.0
        r = linear_amplification(z, lam)
        assert abs(r - math.exp(lam * z)) < 0.1 * z**3 + 4e-16


class TestNonlinear:
    def test_shear_advection_vanishes(self, grid16):
        assert np.max(np.abs(nonlinear_term(shear(grid16, 3.0)).coeffs)) < 1e-14

    def test_taylor_green_is_pure_gradient(self, grid16):
        assert np.max(np.abs(nonlinear_term(taylor_green(grid16)).coeffs)) < 1e-14

    def test_output_solenoidal(self, grid16):
        n = nonlinear_term(random_field(grid16, 0, 10.0))
        assert divergence_residual(n) < 1e-12

    def test_rejects_divergent_input(self, grid16):
        v = np.random.default_rng(0).standard_normal((3, 16, 16, 16))
        with pytest.raises(NotSolenoidalError):
            nonlinear_term(to_spectral(PhysicalField(grid16, v)))


class TestStep:
    def test_shear_matches_scalar_recurrence(self, grid16):
        u = shear(grid16, 2.0)
        dt = 1e-3
        z = -(2 * np.pi) ** 2 * dt
        r = 1.0
        for a, b in zip((29 / 96, -3 / 40, 1 / 6), (37 / 160, 5 / 24, 1 / 6)):
            r *= (1 + a * z) / (1 - b * z)
        np.testing.assert_allclose(step_imex(u, dt).coeffs, r * u.coeffs, atol=1e-14)

    def test_zero_stays_zero(self, grid16):
        assert np.all(step_imex(grid16.zeros(), 1e-3).coeffs == 0)

    def test_local_error_order(self, grid16):
        u = random_field(grid16, 3, 5.0)

        def reference(h):
            v = u
            for _ in range(64):
                v = step_imex(v, h / 64)
            return v.coeffs

        errs = []
        for h in (4e-4, 2e-4, 1e-4):
            errs.append(np.max(np.abs(step_imex(u, h).coeffs - reference(h))))
        rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert min(rates) > 2.0

    def test_difference_quotient_approaches_rhs(self, grid16):
        u = random_field(grid16, 4, 5.0)
        lam = viscous_symbol(grid16, 1.0)
        rhs = lam * u.coeffs - advection_coeffs(u.coeffs, grid16)
        errs = [np.max(np.abs((step_imex(u, h).coeffs - u.coeffs) / h - rhs)) for h in (1e-5, 5e-6, 2.5e-6)]
        assert errs[0] / errs[1] > 1.9 and errs[1] / errs[2] > 1.9


class TestIntegrate:
    def test_shear_decay(self, grid16):
        u0 = shear(grid16)
        traj = integrate(u0, SolverConfig(dt=1e-5, T=0.01, N=16))
        exact = math.exp(-4 * math.pi**2 * 0.01) * u0.coeffs
        err = np.linalg.norm(traj.final.coeffs - exact) / np.linalg.norm(exact)
        assert err < 1e-7
        assert traj.times[-1] == 0.01

    def test_short_last_step(self, grid16):
        cfg = SolverConfig(dt=3e-4, T=1e-3, N=16)
        assert cfg.n_steps == 4
        assert cfg.step_sizes()[-1] == pytest.approx(1e-4)
        assert cfg.times()[-1] == 1e-3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(dt=0.0, T=1.0, N=16)
        with pytest.raises(ValueError):
            SolverConfig(dt=1e-2, T=1e-3, N=16)

    def test_zero_initial_data(self, grid16):
        traj = integrate(grid16.zeros(), SolverConfig(dt=1e-4, T=1e-3, N=16))
        assert all(np.all(s.coeffs == 0) for s in traj.states())

    def test_rejects_mean_flow(self, grid16):
        u = random_field(grid16, 0)
        c = u.coeffs.copy()
        c[0, 0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            integrate(SpectralField(grid16, c), SolverConfig(dt=1e-4, T=1e-3, N=16))

    def test_energy_monotone_and_solenoidal(self, grid16):
        traj = integrate(random_field(grid16, 8, 20.0), SolverConfig(dt=1e-4, T=2e-3, N=16))
        K = [kinetic_energy(s) for s in traj.states()]
        assert all(b <= a + 1e-12 for a, b in zip(K, K[1:]))
        assert max(divergence_residual(s) for s in traj.states()) < 1e-10

    def test_time_self_convergence(self, grid16):
        u0 = random_field(grid16, 9, 20.0)
        finals = [integrate(u0, SolverConfig(dt=dt, T=2e-3, N=16)).final.coeffs for dt in (2e-4, 1e-4, 5e-5)]
        ratio = np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2]))
        assert ratio >= 4.0 * 0.9

    def test_checkpointed_storage_matches_memory(self, grid16):
        u0 = random_field(grid16, 10, 10.0)
        full = integrate(u0, SolverConfig(dt=1e-4, T=1e-3, N=16))
        ck = integrate(u0, SolverConfig(dt=1e-4, T=1e-3, N=16, memory_limit_N=8, checkpoint_every=3))
        assert ck.checkpointed
        for i in range(len(full) - 1, -1, -1):
            assert np.array_equal(ck.coeffs(i), full.coeffs(i))

    def test_states_are_read_only(self, grid16):
        traj = integrate(random_field(grid16, 1), SolverConfig(dt=1e-4, T=3e-4, N=16))
        with pytest.raises(ValueError):
            traj.coeffs(1)[0, 0, 0, 0] = 1.0

    def test_lq_norm_of_shear_decays_exactly(self, grid16):
        traj = integrate(shear(grid16), SolverConfig(dt=1e-5, T=1e-3, N=16))
        ratio = norm_lq(traj.final, 4) / norm_lq(traj.initial, 4)
        assert ratio == pytest.approx(math.exp(-4 * math.pi**2 * 1e-3), rel=1e-9)
