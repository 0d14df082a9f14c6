"""Periodic vector fields on the unit torus and their spectral calculus.

Fields are stored as Fourier coefficients in the real-to-complex layout of
``scipy.fft.rfftn`` with ``norm="forward"``, so that

    u(x) = sum_k  u_k exp(2 pi i k.x),     x in [0, 1)^3,

and coefficient arrays have shape ``(3, N, N, N // 2 + 1)`` with axes
ordered ``(component, kx, ky, kz)``.  ``N`` is the number of collocation
points per direction.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.fft as sfft

TOL_DIV = 1e-10


def fft_workers() -> int:
    return int(os.environ.get("LPSOPT_THREADS", "1"))


class GridMismatchError(ValueError):
    pass


class NotSolenoidalError(ValueError):
    pass


@dataclass(frozen=True)
class WavenumberGrid:
    """Integer wavenumbers and masks for an ``N^3`` collocation lattice."""

    N: int
    dealias_fraction: Fraction = Fraction(2, 3)

    def __post_init__(self):
        if self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N}")
        object.__setattr__(self, "dealias_fraction", Fraction(self.dealias_fraction))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N // 2 + 1)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N)

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumber vectors, shape ``(3, N, N, N//2+1)``.

        Nyquist entries are set to zero, the usual convention for odd
        derivatives of lattice fields; it keeps the mode-wise projector a
        real orthogonal projection on the full lattice.
        """
        kf = np.fft.fftfreq(self.N, 1.0 / self.N)
        kr = np.fft.rfftfreq(self.N, 1.0 / self.N)
        kf[self.N // 2] = 0.0
        kr[-1] = 0.0
        return np.stack(np.meshgrid(kf, kf, kr, indexing="ij"))

    @cached_property
    def k_index(self) -> np.ndarray:
        """Integer wavenumbers of the stored modes, Nyquist entries kept."""
        kf = np.fft.fftfreq(self.N, 1.0 / self.N)
        kr = np.fft.rfftfreq(self.N, 1.0 / self.N)
        return np.stack(np.meshgrid(kf, kf, kr, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros_like(self.k2)
        nz = self.k2 > 0
        out[nz] = 1.0 / self.k2[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        # keep |k_i| < fraction * N / 2 in every direction
        cut = self.dealias_fraction * self.N / 2
        keep = np.all(np.abs(self.k_index) < float(cut), axis=0)
        return keep

    @cached_property
    def kmax_retained(self) -> int:
        return int(np.max(np.abs(self.k_index[0][self.dealias_mask])))

    @cached_property
    def hermitian_weight(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full (two-sided) spectrum."""
        w = np.full(self.shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0  # N even: kz = N/2 is self-conjugate
        return w

    @cached_property
    def padded_N(self) -> int:
        return 3 * self.N // 2 + (3 * self.N // 2) % 2

    @cached_property
    def padded(self) -> "WavenumberGrid":
        return WavenumberGrid(self.padded_N, self.dealias_fraction)

    def coordinates(self) -> np.ndarray:
        x = np.arange(self.N) / self.N
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def zeros(self) -> "SpectralField":
        return SpectralField(self, np.zeros((3,) + self.shape, dtype=complex))


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: WavenumberGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.coeffs.shape != (3,) + self.grid.shape:
            raise GridMismatchError(
                f"coefficient shape {self.coeffs.shape} does not match grid N={self.grid.N}"
            )

    def _check(self, other: "SpectralField"):
        if other.grid.N != self.grid.N:
            raise GridMismatchError(f"grids differ: N={self.grid.N} vs N={other.grid.N}")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return SpectralField(self.grid, self.coeffs * float(a))

    __rmul__ = __mul__

    def __truediv__(self, a):
        return SpectralField(self.grid, self.coeffs / float(a))

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0, 0, 0].real.copy()


@dataclass(frozen=True, eq=False)
class PhysicalField:
    grid: WavenumberGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (3,) + self.grid.physical_shape:
            raise GridMismatchError(
                f"sample shape {self.values.shape} does not match grid N={self.grid.N}"
            )


# ---------------------------------------------------------------- transforms


def rfft3(a: np.ndarray) -> np.ndarray:
    return sfft.rfftn(a, axes=(-3, -2, -1), norm="forward", workers=fft_workers())


def irfft3(a: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(a, s=(n, n, n), axes=(-3, -2, -1), norm="forward", workers=fft_workers())


def to_physical(f: SpectralField) -> PhysicalField:
    return PhysicalField(f.grid, irfft3(f.coeffs, f.grid.N))


def to_spectral(g: PhysicalField, dealias: bool = False) -> SpectralField:
    c = rfft3(g.values)
    if dealias:
        c = c * g.grid.dealias_mask
    return SpectralField(g.grid, c)


def embed(coeffs: np.ndarray, n_from: int, n_to: int) -> np.ndarray:
    """Copy modes with ``|k_i| < min(n_from, n_to) / 2`` between lattice sizes.

    Nyquist modes are dropped; both lattices are assumed even.
    """
    h = min(n_from, n_to) // 2
    lead = coeffs.shape[:-3]
    out = np.zeros(lead + (n_to, n_to, n_to // 2 + 1), dtype=complex)
    pos, neg = slice(0, h), slice(-(h - 1), None) if h > 1 else slice(0, 0)
    for sx in (pos, neg):
        for sy in (pos, neg):
            out[..., sx, sy, :h] = coeffs[..., sx, sy, :h]
    return out


def to_padded_physical(f: SpectralField | np.ndarray, grid: WavenumberGrid | None = None) -> np.ndarray:
    """Samples of a resolved field on the ``(3N/2)^3`` lattice."""
    if isinstance(f, SpectralField):
        grid, coeffs = f.grid, f.coeffs
    else:
        coeffs = f
    M = grid.padded_N
    return irfft3(embed(coeffs, grid.N, M), M)


def from_padded_physical(values: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    """Galerkin truncation of padded-lattice samples to the retained modes of ``grid``."""
    c = embed(rfft3(values), grid.padded_N, grid.N)
    return c * grid.dealias_mask


# ------------------------------------------------------------- differential ops


def leray_coeffs(c: np.ndarray, grid: WavenumberGrid) -> np.ndarray:
    k = grid.k
    kdotc = np.sum(k * c, axis=0)
    out = c - k * (kdotc * grid.inv_k2)
    out[:, 0, 0, 0] = 0.0
    return out


def leray_project(f: SpectralField) -> SpectralField:
    """Orthogonal projection onto solenoidal, zero-mean fields."""
    return SpectralField(f.grid, leray_coeffs(f.coeffs, f.grid))


def curl(f: SpectralField) -> SpectralField:
    ik = 2j * np.pi * f.grid.k
    c = f.coeffs
    out = np.stack(
        [
            ik[1] * c[2] - ik[2] * c[1],
            ik[2] * c[0] - ik[0] * c[2],
            ik[0] * c[1] - ik[1] * c[0],
        ]
    )
    return SpectralField(f.grid, out)


def divergence(f: SpectralField) -> np.ndarray:
    """Scalar spectral field ``div f`` (shape of one component)."""
    return np.sum(2j * np.pi * f.grid.k * f.coeffs, axis=0)


def gradient_scalar(h: np.ndarray, grid: WavenumberGrid) -> SpectralField:
    return SpectralField(grid, 2j * np.pi * grid.k * h[None])


def divergence_residual(f: SpectralField) -> float:
    """``max_k |k.u_k| / (|k| max|u_k|)``; zero for an exactly solenoidal field."""
    scale = np.max(np.abs(f.coeffs))
    if scale == 0.0:
        return 0.0
    kdotc = np.abs(np.sum(f.grid.k * f.coeffs, axis=0))
    return float(np.max(kdotc / np.maximum(f.grid.kmag, 1.0)) / scale)


def is_solenoidal(f: SpectralField, tol: float = TOL_DIV) -> bool:
    return divergence_residual(f) <= tol


def conjugate_symmetry_defect(f: SpectralField) -> float:
    """Largest violation of ``u_{-k} = conj(u_k)`` on the self-conjugate planes."""
    N = f.grid.N
    idx = (-np.arange(N)) % N
    worst = 0.0
    for plane in (0, -1):
        p = f.coeffs[:, :, :, plane]
        mirrored = np.conj(p[:, idx][:, :, idx])
        worst = max(worst, float(np.max(np.abs(p - mirrored), initial=0.0)))
    scale = float(np.max(np.abs(f.coeffs), initial=0.0))
    return worst / scale if scale > 0 else 0.0


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask)


# ------------------------------------------------------ norms, inner products


def inner_l2(f: SpectralField, g: SpectralField) -> float:
    """``int f.g dx`` by Parseval."""
    f._check(g)
    w = f.grid.hermitian_weight
    return float(np.sum(w * np.real(f.coeffs * np.conj(g.coeffs))))


def norm_lq(f: SpectralField | PhysicalField, q: float, padded: bool = True) -> float:
    """``(int |f|^q dx)^(1/q)`` with the rectangle rule.

    Spectral input is sampled on the ``(3N/2)^3`` lattice when ``padded`` is
    set and on the collocation lattice otherwise; ``q = 2`` uses Parseval.
    """
    if not np.isfinite(q):
        raise ValueError("only finite q is supported")
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if isinstance(f, SpectralField):
        if q == 2:
            return float(np.sqrt(max(inner_l2(f, f), 0.0)))
        vals = to_padded_physical(f) if padded else irfft3(f.coeffs, f.grid.N)
    else:
        vals = f.values
    mag = np.sqrt(np.sum(vals**2, axis=0))
    return float(np.mean(mag**q) ** (1.0 / q))


def sobolev_weight(grid: WavenumberGrid, s: float, ell: float, symbol: str = "laplacian") -> np.ndarray:
    """Fourier symbol ``1 + ell^(2s) sigma(k)`` of the ell-weighted H^s metric.

    ``symbol="laplacian"`` uses ``sigma = (2 pi |k|)^(2s)`` (the operator
    ``(-Delta)^s``); ``symbol="printed"`` uses ``sigma = |k|^s``.
    """
    if symbol == "laplacian":
        sigma = (2 * np.pi * grid.kmag) ** (2 * s)
    elif symbol == "printed":
        sigma = grid.kmag**s
    else:
        raise ValueError(f"unknown symbol {symbol!r}")
    return 1.0 + ell ** (2 * s) * sigma


def norm_hs(f: SpectralField, s: float) -> float:
    w = (1.0 + (2 * np.pi) ** 2 * f.grid.k2) ** s
    tot = np.sum(f.grid.hermitian_weight * w * np.abs(f.coeffs) ** 2)
    return float(np.sqrt(tot))


def inner_hs(f: SpectralField, g: SpectralField, s: float, ell: float, symbol: str = "laplacian") -> float:
    f._check(g)
    w = f.grid.hermitian_weight * sobolev_weight(f.grid, s, ell, symbol)
    return float(np.sum(w * np.real(f.coeffs * np.conj(g.coeffs))))


def kinetic_energy(f: SpectralField) -> float:
    return 0.5 * inner_l2(f, f)


def enstrophy(f: SpectralField, tol: float = TOL_DIV) -> float:
    """Half the squared L2 norm of vorticity."""
    if not is_solenoidal(f, tol):
        raise NotSolenoidalError(f"divergence residual {divergence_residual(f):.3e} exceeds {tol:g}")
    w = curl(f)
    return 0.5 * inner_l2(w, w)


def spectral_tail_fraction(f: SpectralField) -> float:
    """Energy in the top octave of the retained band over total energy."""
    e = f.grid.hermitian_weight * np.sum(np.abs(f.coeffs) ** 2, axis=0)
    tot = e.sum()
    if tot == 0.0:
        return 0.0
    top = f.grid.kmag > 0.5 * f.grid.kmax_retained
    return float(e[top].sum() / tot)


# ---------------------------------------------------------------- generators


def from_function(grid: WavenumberGrid, fn) -> SpectralField:
    """Spectral field from ``fn(x, y, z) -> (u1, u2, u3)`` sampled on the lattice."""
    x, y, z = grid.coordinates()
    vals = np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in fn(x, y, z)])
    return to_spectral(PhysicalField(grid, vals))


def random_solenoidal(grid: WavenumberGrid, rng: np.random.Generator, k0: float = 2.0) -> SpectralField:
    """Random resolved solenoidal zero-mean field, energy spectrum ~ k^4 exp(-k^2/k0^2).

    Returned with unit L2 norm.
    """
    noise = rng.standard_normal((3,) + grid.physical_shape)
    c = rfft3(noise)
    amp = grid.k2 * np.exp(-grid.k2 / (2 * k0**2))
    c = leray_coeffs(c * amp * grid.dealias_mask, grid)
    f = SpectralField(grid, c)
    n = norm_lq(f, 2)
    return f / n if n > 0 else f
