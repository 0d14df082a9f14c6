"""Galerkin Navier-Stokes solver: CN/RK3 time stepping and stored trajectories."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .spectral import (
    TOL_DIV,
    NotSolenoidalError,
    SpectralField,
    WavenumberGrid,
    divergence_residual,
    irfft3,
    leray_coeffs,
    rfft3,
    spectral_tail_fraction,
)


# Low-storage IMEX RK3 (Spalart, Moser & Rogers 1991): Crank-Nicolson-type
# weights (alpha, beta) on the stiff linear term, RK3 weights (gamma, zeta)
# on the explicit term.  alpha + beta = gamma + zeta per substage.
ALPHA = (29 / 96, -3 / 40, 1 / 6)
BETA = (37 / 160, 5 / 24, 1 / 6)
GAMMA = (8 / 15, 5 / 12, 3 / 4)
ZETA = (0.0, -17 / 60, -5 / 12)
NODES = (0.0, 8 / 15, 2 / 3)

TAIL_THRESHOLD = 1e-3


class UnderResolvedWarning(RuntimeWarning):
    """Energy near the dealiasing cutoff exceeds the resolution threshold."""


class DivergedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    N: int
    nu: float = 1.0
    store_stride: int = 1
    memory_limit_N: int = 64
    checkpoint_every: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= self.dt * (1 - 1e-12):
            raise ValueError("T must be at least dt")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.store_stride < 1:
            raise ValueError("store_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    def step_sizes(self) -> np.ndarray:
        n = self.n_steps
        dts = np.full(n, self.dt)
        dts[-1] = self.T - self.dt * (n - 1)
        return dts

    def times(self) -> np.ndarray:
        t = np.concatenate([[0.0], np.cumsum(self.step_sizes())])
        t[-1] = self.T
        return t

    def to_dict(self) -> dict:
        return asdict(self)


def viscous_symbol(grid: WavenumberGrid, nu: float) -> np.ndarray:
    """Eigenvalues ``-nu (2 pi)^2 |k|^2`` of the viscous operator."""
    return -nu * (2 * np.pi) ** 2 * grid.k2


def advection_coeffs(c: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """Leray-projected, 2/3-dealiased ``(u.grad)u`` in divergence form."""
    u = irfft3(c, grid.N)
    pairs = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    uu = rfft3(np.stack([u[i] * u[j] for i, j in pairs]))
    ik = 2j * np.pi * grid.k
    t = {p: uu[n] for n, p in enumerate(pairs)}
    sym = lambda i, j: t[(min(i, j), max(i, j))]  # noqa: E731
    out = np.stack([sum(ik[j] * sym(i, j) for j in range(3)) for i in range(3)])
    return leray_coeffs(out * grid.dealias_mask, grid)


def nonlinear_term(u: SpectralField, tol: float = TOL_DIV) -> SpectralField:
    """Advection plus pressure gradient, i.e. the projected ``(u.grad)u``."""
    if divergence_residual(u) > tol:
        raise NotSolenoidalError("nonlinear_term requires a solenoidal field")
    return SpectralField(u.grid, advection_coeffs(u.coeffs, u.grid))


def imex_rk3_step(
    c: np.ndarray,
    h: float,
    lam: np.ndarray,
    explicit: Callable[[np.ndarray, int], np.ndarray],
    grid: WavenumberGrid,
) -> np.ndarray:
    """One step of ``dc/dt = lam * c + explicit(c)``, projected after every substage.

    ``explicit(c, stage)`` is called at substage ``stage`` (node ``NODES[stage]``).
    """
    prev = None
    for s in range(3):
        e = explicit(c, s)
        rhs = (1.0 + ALPHA[s] * h * lam) * c + (GAMMA[s] * h) * e
        if prev is not None:
            rhs += (ZETA[s] * h) * prev
        c = leray_coeffs(rhs / (1.0 - BETA[s] * h * lam) * grid.dealias_mask, grid)
        prev = e
    if not np.all(np.isfinite(c)):
        raise DivergedError("non-finite state after time step")
    return c


def step_imex(u: SpectralField, dt: float, nu: float = 1.0) -> SpectralField:
    grid = u.grid
    lam = viscous_symbol(grid, nu)
    c = imex_rk3_step(u.coeffs, dt, lam, lambda c, s: -advection_coeffs(c, grid), grid)
    return SpectralField(grid, c)


def linear_amplification(h: float, lam: float | np.ndarray):
    """Scalar IMEX amplification factor for ``dc/dt = lam c``."""
    r = 1.0
    for s in range(3):
        r = r * (1 + ALPHA[s] * h * lam) / (1 - BETA[s] * h * lam)
    return r


def max_velocity(c: np.ndarray, grid: WavenumberGrid) -> float:
    u = irfft3(c, grid.N)
    return float(np.sqrt(np.max(np.sum(u**2, axis=0))))


class Trajectory:
    """Forward states at every solver step.

    States are held in memory for ``N <= memory_limit_N``.  Larger runs keep
    every ``m``-th state and recompute one segment at a time on access;
    access in reverse order (as the adjoint does) recomputes each segment once.
    """

    def __init__(self, grid: WavenumberGrid, config: SolverConfig, u0: np.ndarray):
        self.grid = grid
        self.config = config
        self.times = config.times()
        self.dts = config.step_sizes()
        self._lam = viscous_symbol(grid, config.nu)
        n = len(self.dts)
        self.checkpointed = grid.N > config.memory_limit_N
        self.segment = config.checkpoint_every or max(1, int(math.isqrt(n)))
        self._store: dict[int, np.ndarray] = {}
        self._cache_start = -1
        self._cache: list[np.ndarray] = []
        self.tail_fraction = np.zeros(n + 1)
        self._run(u0)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_steps(self) -> int:
        return len(self.dts)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def _advance(self, c: np.ndarray, i: int) -> np.ndarray:
        grid = self.grid
        return imex_rk3_step(c, self.dts[i], self._lam, lambda c, s: -advection_coeffs(c, grid), grid)

    def _keep(self, i: int) -> bool:
        return not self.checkpointed or i % self.segment == 0

    def _run(self, u0: np.ndarray):
        c = u0.copy()
        c.setflags(write=False)
        self._store[0] = c
        self.tail_fraction[0] = spectral_tail_fraction(SpectralField(self.grid, c))
        for i in range(self.n_steps):
            c = self._advance(c, i)
            c.setflags(write=False)
            if self._keep(i + 1):
                self._store[i + 1] = c
            self.tail_fraction[i + 1] = spectral_tail_fraction(SpectralField(self.grid, c))
        self._final = c
        if np.max(self.tail_fraction) > TAIL_THRESHOLD:
            warnings.warn(f"spectral tail fraction exceeds {TAIL_THRESHOLD:.0e}: run may be under-resolved",
                          UnderResolvedWarning, stacklevel=3)

    @property
    def under_resolved(self) -> bool:
        return bool(np.max(self.tail_fraction) > TAIL_THRESHOLD)

    def coeffs(self, i: int) -> np.ndarray:
        n = self.n_steps
        if i < 0:
            i += n + 1
        if not 0 <= i <= n:
            raise IndexError(i)
        if i == n:
            return self._final
        if i in self._store:
            return self._store[i]
        start = (i // self.segment) * self.segment
        if start != self._cache_start:
            c = self._store[start]
            seg = [c]
            for j in range(start, min(start + self.segment, n) - 1):
                c = self._advance(c, j)
                c.setflags(write=False)
                seg.append(c)
            self._cache, self._cache_start = seg, start
        return self._cache[i - start]

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs(i))

    def states(self):
        for i in range(len(self)):
            yield self.state(i)

    @property
    def initial(self) -> SpectralField:
        return self.state(0)

    @property
    def final(self) -> SpectralField:
        return self.state(-1)


def integrate(u0: SpectralField, config: SolverConfig) -> Trajectory:
    """Solve the Navier-Stokes system from ``u0`` over ``[0, config.T]``."""
    if u0.grid.N != config.N:
        raise ValueError(f"initial field has N={u0.grid.N}, config has N={config.N}")
    if divergence_residual(u0) > TOL_DIV:
        raise NotSolenoidalError("initial condition must be solenoidal")
    if np.max(np.abs(u0.mean)) > TOL_DIV * max(1.0, np.max(np.abs(u0.coeffs))):
        raise ValueError("initial condition must have zero mean")
    cfl = max_velocity(u0.coeffs, u0.grid) * config.dt * config.N
    if cfl > 0.5:
        warnings.warn(f"CFL advisory exceeded: max|u| dt N = {cfl:.3f} > 0.5", RuntimeWarning, stacklevel=2)
    c0 = u0.coeffs * u0.grid.dealias_mask
    return Trajectory(u0.grid, config, c0)
