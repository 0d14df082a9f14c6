"""Riesz representers of an L2 gradient in the H^s and L^q geometries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .spectral import (
    SpectralField,
    WavenumberGrid,
    irfft3,
    leray_coeffs,
    rfft3,
    sobolev_weight,
)

DEFAULT_ELL = 1.0 / (2 * math.pi)
ROUNDOFF_FLOOR = 1e-14


# --------------------------------------------------------------------- Sobolev


def sobolev_index(q: float) -> float:
    """Smallest s with H^s continuously embedded in L^q in three dimensions."""
    return 1.5 - 3.0 / q


@dataclass(frozen=True)
class SobolevLift:
    """Low-pass filter ``1 / (1 + ell^(2s) sigma(k))`` mapping L2 gradients to H^s ones.

    ``symbol="printed"`` takes ``sigma = |k|^s``; ``symbol="laplacian"`` takes
    ``sigma = (2 pi |k|)^(2s)``, the symbol of ``(-Delta)^s``.
    """

    s: float
    ell: float = DEFAULT_ELL
    symbol: str = "printed"

    def __post_init__(self):
        if not 0.5 <= self.s < 1.5:
            raise ValueError(f"s must lie in [1/2, 3/2), got {self.s}")
        if not (math.isfinite(self.ell) and self.ell > 0):
            raise ValueError("ell must be finite and positive")
        if self.symbol not in ("printed", "laplacian"):
            raise ValueError(f"unknown symbol {self.symbol!r}")

    @classmethod
    def for_q(cls, q: float, ell: float = DEFAULT_ELL, symbol: str = "printed") -> "SobolevLift":
        return cls(0.5 if q == 3 else sobolev_index(q), ell, symbol)

    def filter(self, grid: WavenumberGrid) -> np.ndarray:
        F = 1.0 / sobolev_weight(grid, self.s, self.ell, self.symbol)
        F[0, 0, 0] = 0.0
        return F


def sobolev_gradient(gL2: SpectralField, lift: SobolevLift) -> SpectralField:
    return SpectralField(gL2.grid, gL2.coeffs * lift.filter(gL2.grid))


# -------------------------------------------------------------------- Lebesgue


@dataclass
class LebesgueGradientSolution:
    """Metric L^q gradient ``g`` with its multipliers.

    ``g`` is a collocation-lattice field (all ``N`` modes) with unit lattice
    L^q norm.  With ``G = grad_eta + mean_multiplier`` (the gradient of a
    potential with a linear part), the pointwise identity

        mu |g|^(q-2) g = -gL2 + G

    holds to ``residuals["pointwise"]``.
    """

    g: SpectralField
    eta: np.ndarray
    grad_eta: SpectralField
    mu: float
    mean_multiplier: np.ndarray
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    converged: bool = True

    @property
    def potential_gradient(self) -> np.ndarray:
        """Lattice samples of ``grad_eta + mean_multiplier``."""
        v = irfft3(self.grad_eta.coeffs, self.g.grid.N)
        return v + self.mean_multiplier[:, None, None, None]


def _lattice_projector(grid: WavenumberGrid):
    """Orthogonal projection onto discretely solenoidal, zero-mean lattice fields."""
    N = grid.N

    def P(v: np.ndarray) -> np.ndarray:
        return irfft3(leray_coeffs(rfft3(v), grid), N)

    return P


def _pointwise(theta: np.ndarray, q: float) -> np.ndarray:
    """``|theta|^(q-2) theta`` for ``q >= 2``."""
    mag2 = np.sum(theta**2, axis=0)
    return mag2 ** ((q - 2) / 2) * theta


def lebesgue_gradient(
    gL2: SpectralField,
    q: float,
    tol: float = 1e-11,
    max_outer: int = 200,
    max_backtracks: int = 8,
    cg_maxiter: int = 1000,
    delta_start: float = 1e-1,
    delta_factor: float = 100.0,
) -> LebesgueGradientSolution:
    """Solve for the unit-L^q ascent direction dual to ``gL2``.

    The metric gradient is ``g = theta / ||theta||_q`` where ``theta`` is the
    solenoidal zero-mean lattice field with ``|theta|^(q-2) theta = gL2 + h``
    for some ``h`` in the span of lattice gradients and constants.  With
    ``z = gL2 + h`` and ``q' = q/(q-1)`` one has ``theta = |z|^(q'-2) z``,
    and ``h`` minimizes the strictly convex functional

        D_delta(h) = (1/q') int (|gL2 + h|^2 + delta^2)^(q'/2) dx

    in the limit ``delta -> 0``.  Each ``delta`` stage is solved by Newton-CG
    (Armijo backtracking, preconditioned by the pointwise inverse Hessian
    weight) and warm-starts the next; the pointwise error left by the
    smoothing is O(delta).  ``mu = -||theta||_q^(q-1)``.
    """
    if q < 2:
        raise ValueError(f"lebesgue_gradient requires q >= 2, got {q}")
    grid = gL2.grid
    N = grid.N
    P = _lattice_projector(grid)

    def Q(v):
        return v - P(v)

    b_raw = irfft3(gL2.coeffs, N)
    scale = float(np.max(np.abs(b_raw)))
    if scale == 0.0:
        raise ValueError("gL2 must be nonzero")
    # Work with max|b| = 1; theta then scales by scale^(1/(q-1)).  Values at
    # the round-off floor are zeroed: theta is only Hoelder-continuous at
    # zeros of b and would amplify them.
    b = b_raw / scale
    b = np.where(np.sqrt(np.sum(b**2, axis=0)) < ROUNDOFF_FLOOR, 0.0, b)
    qd = q / (q - 1)
    n_pts = N**3
    size = 3 * n_pts

    z = b.copy()
    delta = 0.0 if q == 2 else delta_start
    total = 0
    res = np.inf
    while True:
        d2 = delta * delta

        def D(z):
            return float(np.mean((np.sum(z**2, axis=0) + d2) ** (qd / 2)) / qd)

        def theta_of(z):
            return (np.sum(z**2, axis=0) + d2) ** ((qd - 2) / 2) * z

        stage_tol = max(tol, 1e-3 * delta)
        Dc = D(z)
        while True:
            th = theta_of(z)
            G = Q(th)
            res = float(np.max(np.abs(G)) / np.max(np.abs(th)))
            if res < stage_tol or total >= max_outer:
                break
            total += 1
            m = np.sum(z**2, axis=0) + d2
            w = m ** ((qd - 2) / 2)
            beta = (qd - 2) * m ** ((qd - 4) / 2)
            pc = (qd - 2) / (qd - 1) / m

            def hess(v, z=z, w=w, beta=beta):
                v = v.reshape(z.shape)
                return Q(w * v + beta * np.sum(z * v, axis=0) * z).ravel()

            def precond(v, z=z, w=w, pc=pc):
                v = v.reshape(z.shape)
                return Q((v - pc * np.sum(z * v, axis=0) * z) / w).ravel()

            H = LinearOperator((size, size), matvec=hess, dtype=float)
            M = LinearOperator((size, size), matvec=precond, dtype=float)
            d, _ = cg(H, -G.ravel(), rtol=min(0.1, res**0.5), maxiter=cg_maxiter, M=M)
            # re-project: round-off in long CG runs leaks out of the multiplier space
            step = Q(d.reshape(z.shape))
            slope = float(np.sum(G * step)) / n_pts
            if not slope < 0:
                step, slope = -G, -float(np.sum(G * G)) / n_pts
            a = 1.0
            for _ in range(max_backtracks + 1):
                trial = z + a * step
                Dt = D(trial)
                if Dt <= Dc + 1e-4 * a * slope:
                    break
                if -slope * a < 1e-13 * abs(Dc):
                    # decrease of D is below round-off: judge by the residual instead
                    tt = theta_of(trial)
                    if np.max(np.abs(Q(tt))) / np.max(np.abs(tt)) < res:
                        break
                a *= 0.5
            z, Dc = trial, Dt
        if delta <= 0.1 * tol or total >= max_outer:
            break
        delta /= delta_factor
    converged = res < max(tol, 1e-3 * delta)
    th = P(theta_of(z)) * scale ** (1.0 / (q - 1))
    norm = float(np.mean(np.sum(th**2, axis=0) ** (q / 2)) ** (1.0 / q))
    g_vals = th / norm
    mu = -(norm ** (q - 1))

    # Helmholtz split of mu |g|^(q-2) g + gL2 into a gradient and a mean
    r = mu * _pointwise(g_vals, q) + b_raw
    rc = rfft3(r)
    k = grid.k
    kdotr = np.sum(k * rc, axis=0)
    grad_c = k * (kdotr * grid.inv_k2)
    grad_c[:, 0, 0, 0] = 0.0
    eta = kdotr * grid.inv_k2 / (2j * np.pi)
    eta[0, 0, 0] = 0.0
    mean = rc[:, 0, 0, 0].real.copy()

    g = SpectralField(grid, rfft3(g_vals))
    grad_eta = SpectralField(grid, grad_c)
    sol = LebesgueGradientSolution(g, eta, grad_eta, mu, mean, iterations=total, converged=converged)
    sol.residuals = lebesgue_residuals(sol, gL2, q)
    return sol


def lebesgue_residuals(sol: LebesgueGradientSolution, gL2: SpectralField, q: float) -> dict[str, float]:
    """Unregularized residuals of the three equations on the lattice.

    ``pointwise``: max |mu |g|^(q-2) g + gL2 - G| / max|gL2|;
    ``poisson``: max |Lap eta - mu div(|g|^(q-2) g)| relative to 2 pi max |mu |g|^(q-2) g|;
    ``norm``: | ||g||_q - 1 |.
    """
    grid = gL2.grid
    N = grid.N
    b = irfft3(gL2.coeffs, N)
    g = irfft3(sol.g.coeffs, N)
    pw = sol.mu * _pointwise(g, q)
    r = pw + b - sol.potential_gradient
    pointwise = float(np.max(np.abs(r)) / np.max(np.abs(b)))
    k = grid.k
    div_pw = np.sum(2j * np.pi * k * rfft3(pw), axis=0)
    lap_eta = -(2 * np.pi) ** 2 * grid.k2 * sol.eta
    d = irfft3(lap_eta - div_pw, N)
    ref = max(2 * np.pi * float(np.max(np.abs(pw))), 1e-300)
    poisson = float(np.max(np.abs(d)) / ref)
    norm = float(np.mean(np.sum(g**2, axis=0) ** (q / 2)) ** (1.0 / q))
    return {"pointwise": pointwise, "poisson": poisson, "norm": abs(norm - 1.0)}

