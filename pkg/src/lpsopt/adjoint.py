"""Adjoint Navier-Stokes system and L2 gradients of the LPS objectives.

The adjoint is marched in reversed time ``tau = T - t`` as

    du*/dtau = nu Lap u* + P[(grad u*) u + (grad u*)^T u] + P f,

with the same IMEX RK3 scheme as the forward solver.  Forward states
between stored steps are linearly interpolated.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .diagnostics import ObjectiveSpec, trapezoid_weights
from .forward import NODES, DivergedError, Trajectory, imex_rk3_step, viscous_symbol
from .spectral import (
    SpectralField,
    WavenumberGrid,
    from_padded_physical,
    irfft3,
    leray_coeffs,
    rfft3,
    to_padded_physical,
)


def lq_derivative_coeffs(c: np.ndarray, grid: WavenumberGrid, q: float, scale_power: float = 0.0) -> np.ndarray:
    """L2 representer of ``v -> int |u|^(q-2) u.v dx`` times ``||u||_q^scale_power``.

    Evaluated on the padded lattice, so pairing with any resolved ``v``
    reproduces the padded-lattice quadrature exactly.
    """
    vals = to_padded_physical(c, grid)
    mag = np.sqrt(np.sum(vals**2, axis=0))
    norm = float(np.mean(mag**q) ** (1.0 / q))
    if norm == 0.0:
        return np.zeros_like(c)
    g = (norm**scale_power) * mag ** (q - 2) * vals
    return from_padded_physical(g, grid)


def source_term(u_t: SpectralField, spec: ObjectiveSpec, t: float | None = None) -> SpectralField:
    """Adjoint forcing at one instant (unweighted by time quadrature)."""
    grid = u_t.grid
    if spec.kind == "psi":
        return grid.zeros()
    q = spec.q
    c = lq_derivative_coeffs(u_t.coeffs, grid, q, q * (5 - q) / (q - 3))
    c *= 2 * q / ((q - 3) * spec.T)
    return SpectralField(grid, leray_coeffs(c, grid))


def terminal_condition(u_T: SpectralField, spec: ObjectiveSpec) -> SpectralField:
    grid = u_T.grid
    if spec.kind == "phi":
        return grid.zeros()
    c = 3.0 * lq_derivative_coeffs(u_T.coeffs, grid, 3.0)
    return SpectralField(grid, leray_coeffs(c, grid))


def adjoint_advection_coeffs(cs: np.ndarray, cu: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """``P[(grad u*) u + (grad u*)^T u]`` with 2/3 dealiasing."""
    ik = 2j * np.pi * grid.k
    G = irfft3(ik[None, :] * cs[:, None], grid.N)  # G[i, j] = d_j u*_i
    u = irfft3(cu, grid.N)
    out = np.stack([sum(u[j] * (G[i, j] + G[j, i]) for j in range(3)) for i in range(3)])
    return leray_coeffs(rfft3(out) * grid.dealias_mask, grid)


def linearized_advection_coeffs(cp: np.ndarray, cu: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """``P[(u'.grad)u + (u.grad)u']``, the linearization of the advection term."""
    ik = 2j * np.pi * grid.k
    Gu = irfft3(ik[None, :] * cu[:, None], grid.N)
    Gp = irfft3(ik[None, :] * cp[:, None], grid.N)
    u = irfft3(cu, grid.N)
    up = irfft3(cp, grid.N)
    out = np.stack([sum(up[j] * Gu[i, j] + u[j] * Gp[i, j] for j in range(3)) for i in range(3)])
    return leray_coeffs(rfft3(out) * grid.dealias_mask, grid)


def adjoint_rhs(u_star: SpectralField, u_t: SpectralField, f_t: SpectralField) -> SpectralField:
    """Explicit part of ``du*/dtau``: projected adjoint advection plus forcing."""
    u_star._check(u_t)
    u_star._check(f_t)
    grid = u_star.grid
    c = adjoint_advection_coeffs(u_star.coeffs, u_t.coeffs, grid) + leray_coeffs(f_t.coeffs, grid)
    return SpectralField(grid, c)


def march_adjoint(
    traj: Trajectory,
    terminal: np.ndarray,
    source_at: Callable[[int], np.ndarray] | None = None,
) -> np.ndarray:
    """March the adjoint from ``t = T`` to ``t = 0``; returns ``u*(0)`` coefficients.

    ``source_at(i)`` gives the (already quadrature-scaled) forcing at stored
    step ``i``; it is interpolated linearly inside each step.
    """
    grid = traj.grid
    lam = viscous_symbol(grid, traj.config.nu)
    n = traj.n_steps
    cs = leray_coeffs(np.asarray(terminal, dtype=complex) * grid.dealias_mask, grid)
    zero = np.zeros_like(cs)
    f_hi = source_at(n) if source_at else zero
    u_hi = traj.coeffs(n)
    for i in range(n - 1, -1, -1):
        u_lo = traj.coeffs(i)
        f_lo = source_at(i) if source_at else zero

        def explicit(c, s, u_lo=u_lo, u_hi=u_hi, f_lo=f_lo, f_hi=f_hi):
            theta = 1.0 - NODES[s]  # position of the substage inside [t_i, t_{i+1}]
            cu = (1 - theta) * u_lo + theta * u_hi
            cf = (1 - theta) * f_lo + theta * f_hi
            return adjoint_advection_coeffs(c, cu, grid) + cf

        cs = imex_rk3_step(cs, traj.dts[i], lam, explicit, grid)
        u_hi, f_hi = u_lo, f_lo
    if not np.all(np.isfinite(cs)):
        raise DivergedError("adjoint solution is not finite")
    return cs


def phi_source(traj: Trajectory, spec: ObjectiveSpec) -> Callable[[int], np.ndarray]:
    grid = traj.grid

    def at(i: int) -> np.ndarray:
        return source_term(traj.state(i), spec).coeffs

    return at


def solve_adjoint(traj: Trajectory, spec: ObjectiveSpec) -> SpectralField:
    """L2 gradient ``u*(0)`` of the objective with respect to the initial condition."""
    if abs(traj.T - spec.T) > 1e-12 * max(1.0, spec.T):
        raise ValueError(f"trajectory horizon {traj.T} does not match objective T={spec.T}")
    if spec.kind == "phi":
        cs = march_adjoint(traj, np.zeros((3,) + traj.grid.shape, dtype=complex), phi_source(traj, spec))
    else:
        cs = march_adjoint(traj, terminal_condition(traj.final, spec).coeffs)
    return SpectralField(traj.grid, cs)


def discrete_objective_gradient_weights(traj: Trajectory) -> np.ndarray:
    """Trapezoid weights of the stored-sample quadrature used by the objective."""
    return trapezoid_weights(traj.times)
