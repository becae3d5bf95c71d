"""Periodic space-time grids, velocity fields and the spectral transform contract.

Fields are sampled on a uniform periodic lattice of the torus of side ``L``
over ``nt`` time samples of the horizon ``T``.  Sample arrays are always
five-dimensional, ``(nt, nx, ny, nz, d)`` (time-major, component-minor);
two-dimensional fields use ``nz = 1`` and ``d = 2``.

Fourier conventions
-------------------
The forward transform is the lattice average

    u_hat(k) = (1/N) sum_x u(x) exp(-2 pi i k.x),      k in (1/L) Z^dim,

and the inverse is the plain exponential sum ``u(x) = sum_k u_hat(k) exp(2 pi i k.x)``.
Wavenumbers ``k`` are ordinary (not angular) frequencies, so a derivative
multiplies by ``2 pi i k``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

__all__ = [
    "ConfigurationError",
    "GridSpec",
    "VelocityField",
    "SpectralField",
    "to_spectral",
    "from_spectral",
    "spectral_derivative",
    "space_time_average",
    "lattice_norm",
    "rfft_field",
    "irfft_field",
    "half_wavenumbers",
    "coordinates",
    "nyquist_mask",
    "upsample_half",
]


class ConfigurationError(ValueError):
    """Raised for invalid grids, parameters or inconsistent inputs."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic space-time lattice.

    Parameters
    ----------
    nx, ny, nz : int
        Samples per spatial axis (powers of two, >= 8; ``nz = 1`` in 2D).
    L : float
        Box side length.
    nt : int
        Number of time samples (1 means a stationary field).
    T : float
        Time horizon.
    spatial_dim : int
        2 or 3.
    """

    nx: int
    ny: int
    nz: int
    L: float = 1.0
    nt: int = 1
    T: float = 1.0
    spatial_dim: int = 3

    def __post_init__(self):
        if self.spatial_dim not in (2, 3):
            raise ConfigurationError(f"spatial_dim must be 2 or 3, got {self.spatial_dim}")
        ns = [self.nx, self.ny] + ([self.nz] if self.spatial_dim == 3 else [])
        for n in ns:
            if not isinstance(n, (int, np.integer)) or not _is_pow2(int(n)) or n < 8:
                raise ConfigurationError(f"grid sizes must be powers of two >= 8, got {ns}")
        if self.spatial_dim == 2 and self.nz != 1:
            raise ConfigurationError("2D grids require nz = 1")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ConfigurationError("L must be positive")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ConfigurationError("T must be positive")
        if int(self.nt) < 1:
            raise ConfigurationError("nt must be >= 1")

    # --- derived geometry -------------------------------------------------
    @classmethod
    def cube(cls, n: int, spatial_dim: int = 3, L: float = 1.0, nt: int = 1, T: float = 1.0) -> "GridSpec":
        """Isotropic grid with ``n`` samples per spatial axis."""
        nz = n if spatial_dim == 3 else 1
        return cls(nx=n, ny=n, nz=nz, L=L, nt=nt, T=T, spatial_dim=spatial_dim)

    @property
    def spatial_shape(self) -> tuple:
        return (self.nx, self.ny, self.nz)

    @property
    def shape(self) -> tuple:
        """Sample array shape ``(nt, nx, ny, nz, d)``."""
        return (self.nt, self.nx, self.ny, self.nz, self.spatial_dim)

    @property
    def n_active(self) -> tuple:
        """Sizes of the spatial axes that carry the geometry (2 or 3 of them)."""
        return self.spatial_shape[: self.spatial_dim]

    @property
    def fft_axes(self) -> tuple:
        """Axes of a sample array transformed by the spatial FFT."""
        return tuple(range(1, 1 + self.spatial_dim))

    @property
    def volume(self) -> float:
        return float(self.L) ** self.spatial_dim

    @property
    def dt(self) -> float:
        return float(self.T) / self.nt

    @property
    def q_max(self) -> int:
        """Largest shell whose cutoff support lies inside Nyquist: 2^(q+1) <= min(n)/2."""
        nmin = min(self.n_active)
        return int(np.log2(nmin)) - 2

    @property
    def q_top(self) -> int:
        """Smallest Q with 2^Q >= max |k| L on the lattice (last shell needed for reconstruction)."""
        kmax = float(np.sqrt(sum((n // 2) ** 2 for n in self.n_active)))
        return int(np.ceil(np.log2(kmax)))

    def lam(self, q) -> np.ndarray:
        """Dyadic wavenumber lambda_q = 2^q / L."""
        return np.power(2.0, q) / self.L

    def ell(self, q) -> np.ndarray:
        """Dyadic length scale ell_q = L / 2^q."""
        return self.L / np.power(2.0, q)

    def with_time(self, nt: int, T: float) -> "GridSpec":
        return GridSpec(self.nx, self.ny, self.nz, self.L, nt, T, self.spatial_dim)

    def header(self) -> dict:
        return {
            "nx": self.nx, "ny": self.ny, "nz": self.nz, "L": self.L,
            "nt": self.nt, "T": self.T, "spatial_dim": self.spatial_dim,
        }


# ---------------------------------------------------------------------------
# wavenumber tables (cached per grid)
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=16)
def half_wavenumbers(grid: GridSpec) -> tuple:
    """Physical wavenumbers for the real-FFT (half-spectrum) layout.

    Returns a tuple of three arrays broadcastable to ``(nx, ny, nz_half)``
    (the last transformed axis is halved); in 2D the third array is zero.
    """
    dim = grid.spatial_dim
    L = grid.L
    if dim == 3:
        kx = sfft.fftfreq(grid.nx, 1.0 / grid.nx) / L
        ky = sfft.fftfreq(grid.ny, 1.0 / grid.ny) / L
        kz = sfft.rfftfreq(grid.nz, 1.0 / grid.nz) / L
    else:
        kx = sfft.fftfreq(grid.nx, 1.0 / grid.nx) / L
        ky = sfft.rfftfreq(grid.ny, 1.0 / grid.ny) / L
        kz = np.zeros(1)
    ks = (kx[:, None, None], ky[None, :, None], kz[None, None, :])
    for a in ks:
        a.setflags(write=False)
    return ks


@functools.lru_cache(maxsize=16)
def half_kabs(grid: GridSpec) -> np.ndarray:
    """|k| on the half-spectrum layout, shape ``(nx, ny', nz')``."""
    kx, ky, kz = half_wavenumbers(grid)
    out = np.sqrt(kx ** 2 + ky ** 2 + kz ** 2)
    out.setflags(write=False)
    return out


def _full_wavenumbers(grid: GridSpec) -> tuple:
    L = grid.L
    ks = [sfft.fftfreq(n, 1.0 / n) / L for n in grid.spatial_shape]
    if grid.spatial_dim == 2:
        ks[2] = np.zeros(1)
    return (ks[0][:, None, None], ks[1][None, :, None], ks[2][None, None, :])


def coordinates(grid: GridSpec, centered: bool = False) -> tuple:
    """Lattice coordinates ``(x, y, z)`` broadcastable to the spatial shape.

    With ``centered=True`` coordinates are mapped to ``[-L/2, L/2)``.
    """
    out = []
    for axis, n in enumerate(grid.spatial_shape):
        x = np.arange(n) * (grid.L / n)
        if centered:
            x = np.where(x >= grid.L / 2, x - grid.L, x)
        shape = [1, 1, 1]
        shape[axis] = n
        out.append(x.reshape(shape))
    return tuple(out)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def _max_divergence_ratio(grid: GridSpec, samples: np.ndarray) -> float:
    uh = rfft_field(samples, grid)
    kx, ky, kz = half_wavenumbers(grid)
    ks = (kx, ky, kz)[: grid.spatial_dim]
    div = sum(ks[i] * uh[..., i] for i in range(grid.spatial_dim))
    kabs = half_kabs(grid)
    scale = np.max(kabs * np.sqrt(np.sum(np.abs(uh) ** 2, axis=-1)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(div)) / scale)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Real d-vector samples on a :class:`GridSpec` lattice.

    ``samples`` has shape ``(nt, nx, ny, nz, d)``; the array is made
    read-only on construction.  When ``divergence_free`` is set, the spectral
    divergence is checked against a relative tolerance of 1e-8.
    """

    grid: GridSpec
    samples: np.ndarray
    metadata: str = ""
    divergence_free: bool = False
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.shape != self.grid.shape:
            raise ConfigurationError(f"samples shape {s.shape} does not match grid {self.grid.shape}")
        if self.check and not np.all(np.isfinite(s)):
            raise ConfigurationError("field samples must be finite")
        if not s.flags.c_contiguous:
            s = np.ascontiguousarray(s)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.check and self.divergence_free:
            ratio = _max_divergence_ratio(self.grid, s)
            if ratio > 1e-8:
                raise ConfigurationError(f"field flagged divergence-free but |k.u_hat| ratio = {ratio:.3e}")

    @property
    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm |u|, shape ``(nt, nx, ny, nz)``."""
        return np.sqrt(np.sum(self.samples ** 2, axis=-1))

    def time_slice(self, t: int) -> np.ndarray:
        return self.samples[t]


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Full complex spectrum on the lattice (1/L) Z^dim, same layout as samples."""

    grid: GridSpec
    coefficients: np.ndarray

    def wavenumbers(self) -> tuple:
        return _full_wavenumbers(self.grid)

    def mode(self, k_index, t: int = 0) -> np.ndarray:
        """Coefficient vector at integer lattice index ``k_index`` (negative allowed)."""
        idx = tuple(int(k) % n for k, n in zip(k_index, self.grid.spatial_shape))
        return self.coefficients[(t,) + idx]


def to_spectral(f: VelocityField) -> SpectralField:
    """Forward transform with the lattice-average normalisation."""
    g = f.grid
    coeffs = sfft.fftn(f.samples, axes=g.fft_axes, norm="forward")
    return SpectralField(g, coeffs)


def from_spectral(g: SpectralField, metadata: str = "", divergence_free: bool = False) -> VelocityField:
    """Inverse transform (plain exponential sum); the imaginary residue is discarded."""
    grid = g.grid
    s = sfft.ifftn(g.coefficients, axes=grid.fft_axes, norm="forward").real
    return VelocityField(grid, s, metadata=metadata, divergence_free=divergence_free)


def spectral_derivative(g: SpectralField, axis: int) -> SpectralField:
    """Multiply each mode by ``2 pi i k_axis``."""
    if axis not in range(g.grid.spatial_dim):
        raise ConfigurationError(f"axis {axis} invalid for a {g.grid.spatial_dim}D grid")
    k = _full_wavenumbers(g.grid)[axis]
    factor = (2j * np.pi * k)[None, ..., None]
    return SpectralField(g.grid, g.coefficients * factor)


# ---------------------------------------------------------------------------
# internal real-FFT helpers used throughout the package
# ---------------------------------------------------------------------------

def rfft_field(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Half-spectrum of a sample array (leading time axis, optional trailing axes)."""
    return sfft.rfftn(samples, axes=grid.fft_axes, norm="forward")


def irfft_field(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Inverse of :func:`rfft_field`."""
    s = grid.n_active
    return sfft.irfftn(coeffs, s=s, axes=grid.fft_axes, norm="forward")


@functools.lru_cache(maxsize=16)
def nyquist_mask(grid: GridSpec) -> np.ndarray:
    """False on the Nyquist planes of the half-spectrum layout, True elsewhere."""
    ks = half_wavenumbers(grid)
    m = np.ones(half_kabs(grid).shape, dtype=bool)
    for k, n in zip(ks[: grid.spatial_dim], grid.n_active):
        m &= np.abs(k * grid.L) < n // 2
    m.setflags(write=False)
    return m


def upsample_half(coeffs: np.ndarray, grid: GridSpec, factor: int) -> np.ndarray:
    """Samples of the trigonometric interpolant of a half spectrum on a ``factor``-times finer lattice.

    ``coeffs`` has the spatial half-spectrum layout on its leading axes
    (``(nx, ny', nz')`` in 3D, ``(nx, ny', 1)`` in 2D) and no time axis;
    Nyquist planes must already be zero.  Coefficients keep the lattice-average
    normalisation, so the interpolant is the same trigonometric polynomial.
    """
    if factor == 1:
        return irfft_field(coeffs[None], grid)[0]
    dim = grid.spatial_dim
    n = grid.n_active
    big = [f * factor for f in n]
    shape = list(coeffs.shape)
    for ax in range(dim - 1):
        shape[ax] = big[ax]
    shape[dim - 1] = big[dim - 1] // 2 + 1
    out = np.zeros(shape, dtype=complex)
    # build index lists for the full (non-halved) axes: positive and negative halves
    idx = []
    for ax in range(dim - 1):
        h = n[ax] // 2
        idx.append((np.r_[0:h, n[ax] - h:n[ax]], np.r_[0:h, big[ax] - h:big[ax]]))
    h = n[dim - 1] // 2 + 1
    idx.append((np.arange(h), np.arange(h)))
    src = np.ix_(*[a for a, _ in idx])
    dst = np.ix_(*[b for _, b in idx])
    out[dst] = coeffs[src]
    return sfft.irfftn(out, s=big, axes=tuple(range(dim)), norm="forward")


# ---------------------------------------------------------------------------
# averages and norms
# ---------------------------------------------------------------------------

def space_time_average(s) -> float:
    """Space-time bracket <s>: the lattice mean over all samples.

    Uses numpy's pairwise summation, whose order is fixed for a given shape,
    so repeated calls are bit-identical.
    """
    a = np.asarray(s, dtype=np.float64)
    if a.size == 0:
        raise ConfigurationError("cannot average an empty sample set")
    return float(np.mean(a))


def lattice_norm(samples, r) -> float:
    """Normalised lattice L^r norm ``<|f|^r>^(1/r)`` of a vector sample array.

    The Euclidean norm is taken over the trailing component axis; ``r`` may
    be ``np.inf``.
    """
    a = np.asarray(samples, dtype=np.float64)
    mag = np.sqrt(np.sum(a * a, axis=-1))
    if np.isinf(r):
        return float(np.max(mag))
    return float(np.mean(mag ** r) ** (1.0 / r))
