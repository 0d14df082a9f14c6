"""Riemannian gradient ascent on fixed-L^q-norm manifolds of solenoidal fields."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .adjoint import lq_derivative_coeffs, solve_adjoint
from .diagnostics import ObjectiveSpec, objective
from .forward import SolverConfig, Trajectory, integrate
from .lift import DEFAULT_ELL, SobolevLift, lebesgue_gradient, sobolev_gradient
from .spectral import (
    SpectralField,
    WavenumberGrid,
    inner_hs,
    inner_l2,
    leray_coeffs,
    norm_lq,
    random_solenoidal,
)

log = logging.getLogger(__name__)

GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))  # first Brent trial sits at this fraction of the bracket


class DegenerateBaseError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ManifoldSpec:
    """Solenoidal zero-mean fields with ``||u||_q = B``, explored in an H^s or L^q geometry."""

    space: str
    q: float
    B: float
    ell: float = DEFAULT_ELL
    symbol: str = "printed"

    def __post_init__(self):
        if self.space not in ("sobolev", "lebesgue"):
            raise ValueError(f"space must be 'sobolev' or 'lebesgue', got {self.space!r}")
        if not self.q >= 3:
            raise ValueError("q must be >= 3")
        if not self.B > 0:
            raise ValueError("B must be positive")

    @property
    def s(self) -> float:
        return 0.5 if self.q == 3 else 1.5 - 3.0 / self.q

    @property
    def lift(self) -> SobolevLift:
        return SobolevLift(self.s, self.ell, self.symbol)


PROBLEMS = {
    1: ("phi", "sobolev"),
    2: ("phi", "lebesgue"),
    3: ("psi", "sobolev"),
    4: ("psi", "lebesgue"),
}


def problem_setup(problem: int, q: float, B: float, T: float, ell: float = DEFAULT_ELL,
                  symbol: str = "printed") -> tuple[ManifoldSpec, ObjectiveSpec]:
    """Manifold and objective for Problems 1-4 (psi problems force ``q = 3``)."""
    if problem not in PROBLEMS:
        raise ValueError(f"problem must be one of 1-4, got {problem}")
    kind, space = PROBLEMS[problem]
    if kind == "psi":
        q = 3.0
    return ManifoldSpec(space, q, B, ell, symbol), ObjectiveSpec(kind, T, q)


# ---------------------------------------------------------------- geometry


def bar(z: SpectralField) -> SpectralField:
    """Remove divergence, mean and unresolved modes."""
    return SpectralField(z.grid, leray_coeffs(z.coeffs * z.grid.dealias_mask, z.grid))


def constraint_gradient(z: SpectralField, q: float) -> SpectralField:
    """L2 representer of the differential of ``||z||_q^q``, i.e. dealiased ``q |z|^(q-2) z``."""
    return SpectralField(z.grid, q * lq_derivative_coeffs(z.coeffs, z.grid, q))


def tangency_pairing(direction: SpectralField, base: SpectralField, q: float) -> float:
    """``<dF(base), direction> / (||dF(base)|| ||direction||)``, zero for a tangent direction."""
    dF = constraint_gradient(base, q)
    denom = norm_lq(dF, 2) * norm_lq(direction, 2)
    return inner_l2(dF, direction) / denom if denom > 0 else 0.0


def project_tangent(z: SpectralField, base: SpectralField, m: ManifoldSpec) -> SpectralField:
    """Projection onto the tangent space of the manifold at ``base``.

    The Sobolev branch uses the H^s inner product whose Riesz map is the
    lift filter, so that ``grad G = filter(grad F)``; the Lebesgue branch uses
    the L2 duality pairing with ``grad F``.  Both branches annihilate
    ``<grad F(base), .>_{L2}``.
    """
    z._check(base)
    zb = bar(z)
    dF = constraint_gradient(base, m.q)
    if m.space == "sobolev":
        lift = m.lift
        dG = sobolev_gradient(dF, lift)
        n = bar(dG)
        num = inner_hs(zb, dG, lift.s, lift.ell, lift.symbol)
        den = inner_hs(n, dG, lift.s, lift.ell, lift.symbol)
    else:
        n = bar(dF)
        num = inner_l2(dF, zb)
        den = inner_l2(dF, n)
    scale = norm_lq(n, 2) ** 2
    if not (den > 1e-300 and den > 1e-14 * scale):
        raise DegenerateBaseError("tangent projection undefined: constraint gradient vanishes")
    return zb - n * (num / den)


def retract(z: SpectralField, m: ManifoldSpec) -> SpectralField:
    n = norm_lq(z, m.q)
    if n == 0.0:
        raise ValueError("cannot retract the zero field")
    return z * (m.B / n)


def ascent_direction(gL2: SpectralField, base: SpectralField, m: ManifoldSpec) -> tuple[SpectralField, dict]:
    """Lifted and tangent-projected gradient, with lift diagnostics."""
    info: dict = {}
    if m.space == "sobolev":
        g = sobolev_gradient(gL2, m.lift)
    else:
        sol = lebesgue_gradient(gL2, m.q)
        info = {"lift_residuals": sol.residuals, "lift_iterations": sol.iterations, "mu": sol.mu}
        g = sol.g
    return project_tangent(g, base, m), info


# -------------------------------------------------------------- arc search


class _Budget(Exception):
    pass


@dataclass
class BrentResult:
    x: float
    fx: float
    evaluations: dict[float, float]
    exhausted: bool


def brent_maximize(fn: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-10,
                   max_evals: int = 100, cache: dict[float, float] | None = None) -> BrentResult:
    """Maximize ``fn`` on ``[lo, hi]`` with Brent's bounded method (golden section + parabolic steps).

    Evaluations are cached; the returned point is the best evaluated one.
    """
    evals = {} if cache is None else cache
    count = [0]

    def neg(x):
        x = float(x)
        if x not in evals:
            if count[0] >= max_evals:
                raise _Budget
            count[0] += 1
            evals[x] = float(fn(x))
        return -evals[x]

    exhausted = False
    try:
        minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": xtol, "maxiter": 10 * max_evals + 10})
    except _Budget:
        exhausted = True
    finite = {x: f for x, f in evals.items() if np.isfinite(f)}
    if not finite:
        raise ArithmeticError("no finite objective value in arc search")
    xb = max(finite, key=lambda x: (finite[x], -x))
    return BrentResult(xb, finite[xb], evals, exhausted)


@dataclass
class ArcSearchResult:
    tau: float
    objective: float
    stalled: bool
    evaluations: int
    tau_max: float
    point: SpectralField | None = None
    trajectory: Trajectory | None = None


def arc_search(u0: SpectralField, direction: SpectralField, m: ManifoldSpec, spec: ObjectiveSpec,
               solver: SolverConfig, objective0: float | None = None, max_evals: int = 25,
               max_doublings: int = 5, rel_xtol: float = 1e-2) -> ArcSearchResult:
    """Maximize ``tau -> J(retract(u0 + tau d))`` over ``tau >= 0``.

    The bracket ``[0, tau_max]`` is sized so that Brent's first trial moves
    ``u0`` by 10% of ``B`` in L^q, and doubled whenever the maximum lands
    on its right end.
    """
    dnorm = norm_lq(direction, m.q)
    trajs: dict[float, Trajectory] = {}

    def point(tau: float) -> SpectralField:
        return retract(u0 + direction * tau, m)

    def J(tau: float) -> float:
        tr = integrate(point(tau), solver)
        trajs.clear()  # keep only the latest, the caller asks for the best below
        trajs[tau] = tr
        return objective(tr, spec)

    if dnorm == 0.0:
        f0 = objective0 if objective0 is not None else J(0.0)
        return ArcSearchResult(0.0, f0, True, 0, 0.0, u0, None)

    cache: dict[float, float] = {}
    if objective0 is not None:
        cache[0.0] = float(objective0)
    else:
        cache[0.0] = J(0.0)
    best_traj: dict[float, Trajectory] = {}

    def tracked(tau: float) -> float:
        v = J(tau)
        if v >= max(cache.values(), default=-np.inf):
            best_traj.clear()
            best_traj.update(trajs)
        return v

    tau_max = 0.1 * m.B / (GOLDEN * dnorm)
    used = 0
    res = None
    for _ in range(max_doublings + 1):
        before = len(cache)
        res = brent_maximize(tracked, 0.0, tau_max, xtol=rel_xtol * tau_max,
                             max_evals=max_evals - used, cache=cache)
        used += len(cache) - before
        if res.x < tau_max * (1 - 10 * rel_xtol) or used >= max_evals:
            break
        tau_max *= 2.0
    tau, fbest = res.x, res.fx
    if tau == 0.0 or fbest <= cache[0.0]:
        return ArcSearchResult(0.0, cache[0.0], True, used, tau_max, u0, None)
    tr = best_traj.get(tau)
    return ArcSearchResult(tau, fbest, False, used, tau_max, point(tau), tr)


# --------------------------------------------------------------- main loop


@dataclass
class IterationState:
    n: int
    objective: float
    tau: float
    relative_change: float
    constraint_drift: float
    tangency: float
    gradient_norm: float
    direction_norm: float
    evaluations: int
    stalled: bool
    lift_residual: float = float("nan")

    def row(self) -> dict:
        return dict(self.__dict__)


@dataclass
class OptimizationReport:
    history: list[IterationState] = field(default_factory=list)
    optimum: SpectralField | None = None
    objective: float = float("nan")
    reason: str = ""
    manifold: ManifoldSpec | None = None
    objective_spec: ObjectiveSpec | None = None

    @property
    def objectives(self) -> np.ndarray:
        return np.array([h.objective for h in self.history])


def constraint_drift(u: SpectralField, m: ManifoldSpec) -> float:
    return abs(norm_lq(u, m.q) - m.B) / m.B


def optimize(u0_guess: SpectralField, m: ManifoldSpec, spec: ObjectiveSpec, solver: SolverConfig,
             eps: float = 1e-6, n_max: int = 100, max_evals: int = 25,
             callback: Callable[[IterationState, SpectralField], None] | None = None) -> OptimizationReport:
    """Projected gradient ascent with arc search, stopping on small relative change.

    Each iteration: forward solve, adjoint solve, lift of the L2 gradient,
    tangent projection, arc search, retraction.  Two consecutive iterations
    without an improving step end the run as stalled.
    """
    if spec.kind == "phi" and spec.q != m.q:
        raise ValueError("objective and manifold use different q")
    u = retract(bar(u0_guess), m)
    report = OptimizationReport(manifold=m, objective_spec=spec)
    traj = integrate(u, solver)
    J = objective(traj, spec)
    report.history.append(IterationState(0, J, 0.0, float("nan"), constraint_drift(u, m), 0.0,
                                         float("nan"), float("nan"), 1, False))
    zero_steps = 0
    reason = "max_iterations"
    for n in range(1, n_max + 1):
        gL2 = solve_adjoint(traj, spec)
        d, info = ascent_direction(gL2, u, m)
        tang = tangency_pairing(d, u, m.q)
        arc = arc_search(u, d, m, spec, solver, objective0=J, max_evals=max_evals)
        if arc.stalled:
            zero_steps += 1
            J_new = J
        else:
            zero_steps = 0
            u, J_new = arc.point, arc.objective
            traj = arc.trajectory if arc.trajectory is not None else integrate(u, solver)
        rel = abs(J_new - J) / abs(J) if J != 0 else abs(J_new - J)
        lift_res = max(info["lift_residuals"].values()) if info else float("nan")
        state = IterationState(n, J_new, arc.tau, rel, constraint_drift(u, m), tang,
                               norm_lq(gL2, 2), norm_lq(d, 2), arc.evaluations, arc.stalled, lift_res)
        report.history.append(state)
        log.info("iter %d  J=%.10g  tau=%.3e  rel=%.2e", n, J_new, arc.tau, rel)
        if callback is not None:
            callback(state, u)
        J = J_new
        if zero_steps >= 2:
            reason = "stalled"
            break
        if not arc.stalled and rel < eps:
            reason = "converged"
            break
    report.optimum, report.objective, report.reason = u, J, reason
    return report


# ----------------------------------------------------------- initial guesses


def random_guess(grid: WavenumberGrid, m: ManifoldSpec, seed: int, k0: float = 2.0) -> SpectralField:
    """Random solenoidal field with spectrum ~ k^4 exp(-k^2/k0^2), placed on the manifold."""
    return retract(random_solenoidal(grid, np.random.default_rng(seed), k0), m)


def rescaled_guess(u: SpectralField, m: ManifoldSpec) -> SpectralField:
    """Warm start from a previous optimum, cleaned and rescaled to the new level ``B``."""
    return retract(bar(u), m)
