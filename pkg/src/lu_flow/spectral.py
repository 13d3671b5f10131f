"""Fourier representation of periodic fields on the 2D torus [0, 2pi)^2.

Fields are stored as truncated Fourier coefficient arrays in numpy fft
ordering, normalised so that ``u(x) = sum_k c_k exp(i k.x)`` with integer
wavevectors k.  The Nyquist rows/columns (|k_i| = n/2) are held at zero so
every retained mode has a conjugate partner and odd derivatives stay
well defined; Hermitian symmetry then guarantees real-valued fields.

Quadratic terms are evaluated pseudo-spectrally after zero-padding to at
least 3N/2 points per dimension (the 2/3 rule), which makes products of
band-limited fields alias-free.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

SNAPSHOT_MAGIC = b"LUFS"
SNAPSHOT_VERSION = 1


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


class TorusGrid:
    """Wavenumber bookkeeping for an N x N truncation of the periodic torus.

    Parameters
    ----------
    n_modes : int
        Modes per dimension; must be even and >= 8.
    """

    def __init__(self, n_modes: int):
        if n_modes % 2 != 0 or n_modes < 8:
            raise ValueError(f"n_modes must be even and >= 8, got {n_modes}")
        self.n_modes = int(n_modes)
        self.side_length = TWO_PI
        n = self.n_modes
        k1d = np.fft.fftfreq(n, d=1.0 / n)  # integer wavenumbers, fft order
        self.kx = k1d[:, None]
        self.ky = k1d[None, :]
        self.k_sq = self.kx**2 + self.ky**2
        half = n // 2
        self.nyquist_mask = (np.abs(k1d[:, None]) == half) | (np.abs(k1d[None, :]) == half)
        # index of mode -k for each mode k (valid away from Nyquist)
        idx = np.arange(n)
        self._neg = (-idx) % n
        self._pad_maps: dict[int, np.ndarray] = {}
        self.pad_size = _pad_size(n)
        x1d = np.arange(n) * (TWO_PI / n)
        self.x = x1d[:, None] + 0.0 * x1d[None, :]
        self.y = 0.0 * x1d[:, None] + x1d[None, :]

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and other.n_modes == self.n_modes

    def __hash__(self):
        return hash(("TorusGrid", self.n_modes))

    def __repr__(self):
        return f"TorusGrid(n_modes={self.n_modes})"

    def pad_indices(self, m: int) -> np.ndarray:
        """Index of each retained mode inside an m-point fft array."""
        if m < self.n_modes:
            raise ValueError("pad target smaller than grid")
        if m not in self._pad_maps:
            freqs = np.fft.fftfreq(self.n_modes, d=1.0 / self.n_modes).astype(int)
            self._pad_maps[m] = np.mod(freqs, m)
        return self._pad_maps[m]


def _pad_size(n: int) -> int:
    """Smallest even integer >= 3n/2 (alias-free quadratic products)."""
    m = (3 * n + 1) // 2
    return m + (m % 2)


@dataclass
class SpectralVelocity:
    """Divergence-free 2-component velocity field in spectral form."""

    grid: TorusGrid
    coeffs: np.ndarray  # complex128, shape (2, n, n)

    def copy(self) -> "SpectralVelocity":
        return SpectralVelocity(self.grid, self.coeffs.copy())


@dataclass
class SpectralScalar:
    """Real scalar field (tracer) in spectral form."""

    grid: TorusGrid
    coeffs: np.ndarray  # complex128, shape (n, n)

    def copy(self) -> "SpectralScalar":
        return SpectralScalar(self.grid, self.coeffs.copy())


# ---------------------------------------------------------------------------
# transforms

def to_physical(grid: TorusGrid, coeffs: np.ndarray, m: int | None = None) -> np.ndarray:
    """Evaluate coefficient array on an m x m physical grid (default n x n)."""
    n = grid.n_modes
    m = n if m is None else m
    if m == n:
        padded = coeffs
    else:
        idx = grid.pad_indices(m)
        padded = np.zeros(coeffs.shape[:-2] + (m, m), dtype=complex)
        padded[..., idx[:, None], idx[None, :]] = coeffs
    return np.fft.ifft2(padded).real * (m * m)


def from_physical(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Project physical values on an m x m grid back onto the retained modes."""
    m = values.shape[-1]
    n = grid.n_modes
    c = np.fft.fft2(values) / (m * m)
    if m != n:
        idx = grid.pad_indices(m)
        c = c[..., idx[:, None], idx[None, :]]
    out = np.ascontiguousarray(c)
    out[..., grid.nyquist_mask] = 0.0
    return out


def hermitian_symmetrize(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Return the Hermitian part of ``coeffs`` (real-valued field) with
    Nyquist modes zeroed."""
    neg = grid._neg
    sym = 0.5 * (coeffs + np.conj(coeffs[..., neg[:, None], neg[None, :]]))
    sym[..., grid.nyquist_mask] = 0.0
    return sym


def hermitian_defect(grid: TorusGrid, coeffs: np.ndarray) -> float:
    neg = grid._neg
    return float(np.max(np.abs(coeffs - np.conj(coeffs[..., neg[:, None], neg[None, :]]))))


# ---------------------------------------------------------------------------
# differential operators and projection

def spectral_derivative(grid: TorusGrid, coeffs: np.ndarray, direction: int) -> np.ndarray:
    """Multiply coefficients by i*k_direction (x: 0, y: 1)."""
    k = grid.kx if direction == 0 else grid.ky
    return 1j * k * coeffs


def gradient(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Gradient along a new leading axis: out[j] = d/dx_j coeffs."""
    return np.stack([1j * grid.kx * coeffs, 1j * grid.ky * coeffs])


def divergence(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Divergence of a 2-component field (contracts the leading axis)."""
    return 1j * grid.kx * coeffs[0] + 1j * grid.ky * coeffs[1]


def leray_project(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Remove the gradient part: u_k -> u_k - k (k.u_k)/|k|^2, zero mean mode.

    Acts as the identity on divergence-free fields and annihilates pure
    gradients; idempotent and self-adjoint in the L2 inner product.
    """
    k_sq = np.where(grid.k_sq == 0, 1.0, grid.k_sq)
    k_dot_u = grid.kx * coeffs[0] + grid.ky * coeffs[1]
    out = np.empty_like(coeffs)
    out[0] = coeffs[0] - grid.kx * k_dot_u / k_sq
    out[1] = coeffs[1] - grid.ky * k_dot_u / k_sq
    out[:, 0, 0] = 0.0
    return out


def leray_project_velocity(f: SpectralVelocity) -> SpectralVelocity:
    return SpectralVelocity(f.grid, leray_project(f.grid, f.coeffs))


def max_divergence(grid: TorusGrid, coeffs: np.ndarray) -> float:
    """max_k |k . u_k|, the divergence-free defect."""
    return float(np.max(np.abs(grid.kx * coeffs[0] + grid.ky * coeffs[1])))


# ---------------------------------------------------------------------------
# dealiased products

def dealiased_product(grid: TorusGrid, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pointwise product of two spectral fields via zero-padded transforms.

    Both inputs are broadcast elementwise over leading axes.  Exact
    (alias-free) whenever the combined bandwidth fits the retained lattice.
    """
    m = grid.pad_size
    fp = to_physical(grid, f, m)
    gp = to_physical(grid, g, m)
    return from_physical(grid, fp * gp)


def dealiased_product_fields(f, g):
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")
    return dealiased_product(f.grid, f.coeffs, g.coeffs)


def advect(grid: TorusGrid, u: np.ndarray, f: np.ndarray,
           u_phys_pad: np.ndarray | None = None) -> np.ndarray:
    """(u . grad) f with dealiasing.  f may be scalar (n,n) or vector (2,n,n).

    ``u_phys_pad`` optionally supplies u already evaluated on the padded grid.
    """
    m = grid.pad_size
    if u_phys_pad is None:
        u_phys_pad = to_physical(grid, u, m)
    gf = np.stack([1j * grid.kx * f, 1j * grid.ky * f])  # (2, ..., n, n)
    gf_phys = to_physical(grid, gf, m)
    prod = u_phys_pad[0] * gf_phys[0] + u_phys_pad[1] * gf_phys[1]
    return from_physical(grid, prod)


# ---------------------------------------------------------------------------
# inner products and norms (L2 over [0, 2pi)^2, Parseval form)

def h_inner(grid: TorusGrid, f: np.ndarray, g: np.ndarray) -> float:
    """L2 inner product summed over all components."""
    return float(TWO_PI**2 * np.sum((np.conj(f) * g).real))


def h_norm(grid: TorusGrid, f: np.ndarray) -> float:
    return float(TWO_PI * np.sqrt(np.sum(np.abs(f) ** 2)))


def v_inner(grid: TorusGrid, f: np.ndarray, g: np.ndarray) -> float:
    """H1 seminorm inner product (gradient inner product)."""
    return float(TWO_PI**2 * np.sum(grid.k_sq * (np.conj(f) * g).real))


def v_norm(grid: TorusGrid, f: np.ndarray) -> float:
    return float(TWO_PI * np.sqrt(np.sum(grid.k_sq * np.abs(f) ** 2)))


def sobolev_norm_sq(grid: TorusGrid, f: np.ndarray, order: int) -> float:
    """Squared H^order norm via the multiplier (1 + |k|^2)^order."""
    w = (1.0 + grid.k_sq) ** order
    return float(TWO_PI**2 * np.sum(w * np.abs(f) ** 2))


def energy(field: SpectralVelocity) -> float:
    """Kinetic energy 0.5 |v|_H^2."""
    return 0.5 * h_norm(field.grid, field.coeffs) ** 2


def enstrophy(field: SpectralVelocity) -> float:
    """0.5 ||v||_V^2."""
    return 0.5 * v_norm(field.grid, field.coeffs) ** 2


# ---------------------------------------------------------------------------
# binary snapshots: little-endian header {magic "LUFS", version u32,
# n_modes u32, n_components u32} + interleaved complex64, row-major k-order

def save_snapshot(path, grid: TorusGrid, coeffs: np.ndarray) -> None:
    arr = np.asarray(coeffs, dtype=np.complex128)
    if arr.ndim == 2:
        arr = arr[None]
    n_comp = arr.shape[0]
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", SNAPSHOT_VERSION, grid.n_modes, n_comp))
        interleaved = np.ascontiguousarray(arr.transpose(1, 2, 0).astype(np.complex64))
        fh.write(interleaved.tobytes())


def load_snapshot(path) -> tuple[TorusGrid, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        version, n, n_comp = struct.unpack("<III", fh.read(12))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        raw = np.frombuffer(fh.read(), dtype=np.complex64)
    if raw.size != n * n * n_comp:
        raise ValueError("truncated snapshot payload")
    coeffs = raw.reshape(n, n, n_comp).transpose(2, 0, 1).astype(np.complex128)
    grid = TorusGrid(n)
    if n_comp == 1:
        coeffs = coeffs[0]
    return grid, coeffs
