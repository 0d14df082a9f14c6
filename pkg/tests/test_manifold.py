import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpsopt.diagnostics import ObjectiveSpec, objective
from lpsopt.forward import SolverConfig, integrate
from lpsopt.lift import sobolev_gradient
from lpsopt.manifold import (
    DegenerateBaseError,
    ManifoldSpec,
    arc_search,
    bar,
    brent_maximize,
    constraint_drift,
    constraint_gradient,
    optimize,
    problem_setup,
    project_tangent,
    random_guess,
    retract,
    tangency_pairing,
)
from lpsopt.spectral import (
    WavenumberGrid,
    divergence_residual,
    from_function,
    inner_hs,
    inner_l2,
    norm_lq,
)

from conftest import random_field, shear

SOLVER = SolverConfig(dt=1e-4, T=1e-3, N=16)


def branch_pairing(z, base, m):
    """The pairing each branch's tangent space annihilates, normalized."""
    dF = constraint_gradient(base, m.q)
    if m.space == "sobolev":
        dG = sobolev_gradient(dF, m.lift)
        num = inner_hs(dG, z, m.s, m.ell, m.symbol)
        den = inner_hs(dG, dG, m.s, m.ell, m.symbol) ** 0.5 * inner_hs(z, z, m.s, m.ell, m.symbol) ** 0.5
    else:
        num = inner_l2(dF, z)
        den = norm_lq(dF, 2) * norm_lq(z, 2)
    return num / den


class TestSpecs:
    def test_problem_table(self):
        m, spec = problem_setup(1, 4.0, 10.0, 1e-3)
        assert (m.space, m.s, spec.kind, spec.p) == ("sobolev", 0.75, "phi", 8.0)
        m, spec = problem_setup(4, 5.0, 10.0, 1e-3)
        assert (m.space, m.q, spec.kind) == ("lebesgue", 3.0, "psi")
        assert problem_setup(3, 3.0, 1.0, 1e-3)[0].s == 0.5

    def test_validation(self):
        with pytest.raises(ValueError):
            ManifoldSpec("sobolev", 4.0, 0.0)
        with pytest.raises(ValueError):
            ManifoldSpec("hilbert", 4.0, 1.0)
        with pytest.raises(ValueError):
            problem_setup(5, 4.0, 1.0, 1e-3)


class TestConstraintGradient:
    def test_q2(self, grid16):
        z = random_field(grid16, 0)
        np.testing.assert_allclose(constraint_gradient(z, 2.0).coeffs, 2 * z.coeffs, atol=1e-14)

    def test_shear_q4(self, grid16):
        exact = from_function(grid16, lambda x, y, z: (4 * np.sin(2 * np.pi * y) ** 3, 0.0, 0.0))
        np.testing.assert_allclose(constraint_gradient(shear(grid16), 4.0).coeffs, exact.coeffs, atol=1e-14)

    @pytest.mark.parametrize("q", [3.0, 4.0, 9.0])
    def test_directional_derivative(self, grid16, q):
        z, zp = random_field(grid16, 1, 3.0), random_field(grid16, 2)
        eps = 1e-5
        fd = (norm_lq(z + zp * eps, q) ** q - norm_lq(z - zp * eps, q) ** q) / (2 * eps)
        assert inner_l2(constraint_gradient(z, q), zp) == pytest.approx(fd, rel=1e-6)


class TestTangentProjection:
    @pytest.mark.parametrize("space", ["sobolev", "lebesgue"])
    def test_fixed_point_and_pairing(self, grid16, space):
        m = ManifoldSpec(space, 4.0, 3.0)
        base = retract(random_field(grid16, 3), m)
        p = project_tangent(random_field(grid16, 4), base, m)
        assert abs(branch_pairing(p, base, m)) < 1e-10
        assert abs(tangency_pairing(p, base, m.q)) < 1e-10
        np.testing.assert_allclose(project_tangent(p, base, m).coeffs, p.coeffs,
                                   atol=1e-12 * np.max(np.abs(p.coeffs)))
        assert divergence_residual(p) < 1e-12
        assert np.max(np.abs(p.mean)) == 0.0

    def test_normal_direction_annihilated(self, grid16):
        m = ManifoldSpec("sobolev", 4.0, 3.0)
        base = retract(random_field(grid16, 5), m)
        n = bar(sobolev_gradient(constraint_gradient(base, m.q), m.lift))
        p = project_tangent(n, base, m)
        assert norm_lq(p, 2) < 1e-10 * norm_lq(n, 2)

    def test_lebesgue_shear_base(self, grid16):
        m = ManifoldSpec("lebesgue", 4.0, 1.0)
        base = retract(shear(grid16), m)
        p = project_tangent(random_field(grid16, 6), base, m)
        pairing = inner_l2(constraint_gradient(base, 4.0), p)
        assert abs(pairing) < 1e-10 * norm_lq(constraint_gradient(base, 4.0), 2) * norm_lq(p, 2)

    @settings(max_examples=10)
    @given(st.integers(0, 10**6), st.sampled_from(["sobolev", "lebesgue"]), st.sampled_from([3.0, 4.0, 9.0]))
    def test_idempotent(self, seed, space, q):
        grid = WavenumberGrid(8)
        m = ManifoldSpec(space, q, 2.0)
        base = retract(random_field(grid, seed), m)
        p1 = project_tangent(random_field(grid, seed + 1), base, m)
        p2 = project_tangent(p1, base, m)
        assert np.max(np.abs(p2.coeffs - p1.coeffs)) <= 1e-12 * np.max(np.abs(p1.coeffs))

    def test_degenerate_base(self, grid16):
        m = ManifoldSpec("lebesgue", 4.0, 1.0)
        with pytest.raises(DegenerateBaseError):
            project_tangent(random_field(grid16, 0), grid16.zeros(), m)


class TestRetraction:
    def test_identity_on_manifold(self, grid16):
        m = ManifoldSpec("sobolev", 4.0, 2.0)
        w = retract(random_field(grid16, 0), m)
        np.testing.assert_allclose(retract(w, m).coeffs, w.coeffs, rtol=1e-14)
        np.testing.assert_allclose(retract(w * 2.0, m).coeffs, w.coeffs, rtol=1e-14)

    @given(st.integers(0, 10**6))
    def test_level_q9(self, seed):
        m = ManifoldSpec("lebesgue", 9.0, 500.0)
        z = retract(random_field(WavenumberGrid(8), seed, 0.01), m)
        assert norm_lq(z, 9.0) == pytest.approx(500.0, rel=1e-12)

    def test_zero_rejected(self, grid16):
        with pytest.raises(ValueError):
            retract(grid16.zeros(), ManifoldSpec("sobolev", 4.0, 1.0))


class TestBrent:
    def test_parabola(self):
        res = brent_maximize(lambda t: -((t - 0.3) ** 2), 0.0, 1.0)
        assert res.x == pytest.approx(0.3, abs=1e-8)
        assert not res.exhausted

    def test_budget(self):
        res = brent_maximize(lambda t: -abs(t - 0.3) ** 1.5, 0.0, 1.0, max_evals=4)
        assert res.exhausted
        assert len(res.evaluations) == 4

    def test_cache_reused(self):
        calls = []

        def f(t):
            calls.append(t)
            return np.sin(3 * t)

        cache = {}
        brent_maximize(f, 0.0, 1.0, cache=cache)
        n = len(calls)
        brent_maximize(f, 0.0, 1.0, cache=cache)
        assert len(calls) == n


class TestArcSearch:
    def test_zero_direction_stalls(self, grid16):
        m, spec = problem_setup(1, 4.0, 3.0, 1e-3)
        u = random_guess(grid16, m, 0)
        res = arc_search(u, grid16.zeros(), m, spec, SOLVER, objective0=1.0)
        assert res.stalled and res.tau == 0.0 and res.objective == 1.0

    def test_improves_on_real_instance(self, grid16):
        m, spec = problem_setup(1, 4.0, 5.0, 1e-3)
        from lpsopt.adjoint import solve_adjoint
        from lpsopt.manifold import ascent_direction

        u = random_guess(grid16, m, 1)
        traj = integrate(u, SOLVER)
        J0 = objective(traj, spec)
        d, _ = ascent_direction(solve_adjoint(traj, spec), u, m)
        res = arc_search(u, d, m, spec, SOLVER, objective0=J0)
        assert not res.stalled
        assert res.objective >= J0
        J_end = objective(integrate(retract(u + d * res.tau_max, m), SOLVER), spec)
        assert res.objective >= J_end
        assert constraint_drift(res.point, m) < 1e-12


class TestOptimize:
    @pytest.mark.parametrize("problem", [1, 2, 3, 4])
    def test_monotone_ascent_on_manifold(self, grid16, problem):
        m, spec = problem_setup(problem, 4.0, 5.0, 1e-3)
        rep = optimize(random_guess(grid16, m, 2), m, spec, SOLVER, n_max=3)
        J = rep.objectives
        assert np.all(np.diff(J) >= -1e-12 * np.abs(J[:-1]))
        assert all(h.constraint_drift < 1e-10 for h in rep.history)
        assert all(abs(h.tangency) < 1e-10 for h in rep.history[1:])
        assert divergence_residual(rep.optimum) < 1e-10
        assert rep.reason in ("converged", "max_iterations", "stalled")

    def test_restart_at_optimum_terminates(self, grid16):
        m, spec = problem_setup(1, 4.0, 2.0, 1e-3)
        solver = SolverConfig(dt=2e-4, T=1e-3, N=16)
        first = optimize(random_guess(grid16, m, 0), m, spec, solver, eps=1e-2, n_max=60)
        assert first.reason == "converged"
        again = optimize(first.optimum, m, spec, solver, eps=1e-2, n_max=10)
        assert len(again.history) - 1 <= 2

    def test_rejects_mismatched_q(self, grid16):
        m, _ = problem_setup(1, 4.0, 2.0, 1e-3)
        with pytest.raises(ValueError):
            optimize(random_guess(grid16, m, 0), m, ObjectiveSpec("phi", 1e-3, 5.0), SOLVER)


class TestGuesses:
    def test_random_guess(self, grid16):
        m = ManifoldSpec("sobolev", 4.0, 7.0)
        a, b = random_guess(grid16, m, 3), random_guess(grid16, m, 3)
        assert np.array_equal(a.coeffs, b.coeffs)
        assert norm_lq(a, 4.0) == pytest.approx(7.0, rel=1e-12)
        assert divergence_residual(a) < 1e-13
        assert np.max(np.abs(a.mean)) == 0.0
        assert np.all(a.coeffs[:, ~grid16.dealias_mask] == 0)
