"""Binary field files.

Layout (all little-endian)::

    offset  size  content
    0       4     magic b"LPSF"
    4       4     u32 format version (1)
    8       4     u32 N, lattice points per direction
    12      8     f64 time stamp
    20      4     u32 layout tag (1 = rfft half-spectrum)
    24      ...   complex128 coefficients, C order over (component, kx, ky, kz)
                  with shape (3, N, N, N//2 + 1); kx, ky in FFT order
                  (0, 1, ..., N/2-1, -N/2, ..., -1), kz = 0, ..., N/2.

Coefficients follow the ``u(x) = sum_k u_k exp(2 pi i k.x)`` convention.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import SpectralField, WavenumberGrid, conjugate_symmetry_defect

MAGIC = b"LPSF"
VERSION = 1
LAYOUT_RFFT_HALF = 1
_HEADER = struct.Struct("<4sIIdI")


class FieldFileError(IOError):
    pass


def write_field(path: str | Path, f: SpectralField, time: float = 0.0) -> None:
    header = _HEADER.pack(MAGIC, VERSION, f.grid.N, float(time), LAYOUT_RFFT_HALF)
    data = np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()
    Path(path).write_bytes(header + data)


def read_field(path: str | Path, symmetry_tol: float = 1e-10) -> tuple[SpectralField, float]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FieldFileError(f"{path}: truncated header")
    magic, version, N, time, layout = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FieldFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION or layout != LAYOUT_RFFT_HALF:
        raise FieldFileError(f"{path}: unsupported version {version} / layout {layout}")
    grid = WavenumberGrid(N)
    count = 3 * N * N * (N // 2 + 1)
    body = raw[_HEADER.size:]
    if len(body) != 16 * count:
        raise FieldFileError(f"{path}: expected {16 * count} payload bytes, found {len(body)}")
    coeffs = np.frombuffer(body, dtype="<c16").astype(complex).reshape((3,) + grid.shape)
    f = SpectralField(grid, coeffs)
    defect = conjugate_symmetry_defect(f)
    if defect > symmetry_tol:
        raise FieldFileError(f"{path}: conjugate symmetry violated ({defect:.2e})")
    return f, time
