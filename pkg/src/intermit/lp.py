"""Dimensional Littlewood-Paley cutoffs and shell projections.

The profile ``chi`` is the standard smooth step: ``chi(t) = 1`` for
``t <= 1/2``, ``chi(t) = 0`` for ``t >= 1`` and ``chi(t) = g(2(1 - t))`` in
between, with ``g(s) = e^{-1/s} / (e^{-1/s} + e^{-1/(1-s)})``.  Shell filters
are

    phi_{-1}(k) = chi(L|k|),       phi_q(k) = chi(L|k| / 2^{q+1}) - chi(L|k| / 2^q),

so ``sum_{q=-1}^{Q} phi_q(k) = chi(L|k| / 2^{Q+1})`` telescopes to one on every
resolved mode once ``2^Q >= L|k|``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .grid import (
    ConfigurationError,
    GridSpec,
    VelocityField,
    half_kabs,
    half_wavenumbers,
    irfft_field,
    lattice_norm,
    rfft_field,
)

__all__ = [
    "smooth_step",
    "chi",
    "phi_profile",
    "DyadicCutoffs",
    "build_cutoffs",
    "shell_project",
    "low_pass",
    "sqrt_low_pass",
    "ShellDecomposition",
    "decompose",
    "bernstein_ratio",
    "h_norm_ratios",
    "gradient_ratio",
]


def smooth_step(s):
    """``g(s)``: 0 for s <= 0, 1 for s >= 1, C-infinity and monotone in between."""
    s = np.asarray(s, dtype=np.float64)
    out = np.where(s >= 1.0, 1.0, 0.0)
    m = (s > 0.0) & (s < 1.0)
    if np.any(m):
        sm = s[m]
        a = np.exp(-1.0 / sm)
        b = np.exp(-1.0 / (1.0 - sm))
        out[m] = a / (a + b)
    return out


def chi(t):
    """Radial cutoff profile as a function of ``t = |xi|``."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.where(t <= 0.5, 1.0, 0.0)
    m = (t > 0.5) & (t < 1.0)
    if np.any(m):
        out[m] = smooth_step(2.0 * (1.0 - t[m]))
    return out


def phi_profile(q: int, xi):
    """Shell filter ``phi_q`` evaluated at dimensionless ``xi = L|k|``."""
    xi = np.asarray(xi, dtype=np.float64)
    if q == -1:
        return chi(xi)
    if q < -1:
        raise ConfigurationError("shell index must be >= -1")
    return chi(xi / 2.0 ** (q + 1)) - chi(xi / 2.0 ** q)


@dataclass(frozen=True, eq=False)
class DyadicCutoffs:
    """Cutoff tables on the real-FFT lattice of a grid.

    Tables are computed lazily and cached; they are indexed like the
    half-spectrum returned by :func:`intermit.grid.rfft_field` (without the
    time and component axes).
    """

    grid: GridSpec

    @property
    def q_max(self) -> int:
        return self.grid.q_max

    @property
    def q_top(self) -> int:
        return self.grid.q_top

    @property
    def shells(self) -> list:
        """All shell indices materialised for reconstruction, ``-1 .. q_top``."""
        return list(range(-1, self.q_top + 1))

    def resolved(self, q: int) -> bool:
        return -1 <= q <= self.q_max

    @functools.cached_property
    def xi(self) -> np.ndarray:
        return half_kabs(self.grid) * self.grid.L

    def phi(self, q: int) -> np.ndarray:
        return self._table(("phi", q))

    def chi_low(self, q: int) -> np.ndarray:
        """``chi(L|k| / 2^q)`` — the symbol of the low-pass ``u_{<q}``."""
        return self._table(("chi", q))

    def sqrt_chi_low(self, q: int) -> np.ndarray:
        return self._table(("sqrt", q))

    def _table(self, key):
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            kind, q = key
            if kind == "phi":
                t = phi_profile(q, self.xi)
            elif kind == "chi":
                t = chi(self.xi / 2.0 ** q)
            else:
                t = np.sqrt(chi(self.xi / 2.0 ** q))
            t.setflags(write=False)
            cache[key] = t
        return cache[key]

    def partition_defect(self) -> float:
        """max_k |sum_q phi_q(k) - 1| over the resolved lattice."""
        total = np.zeros_like(self.xi)
        for q in self.shells:
            total = total + self.phi(q)
        return float(np.max(np.abs(total - 1.0)))


@functools.lru_cache(maxsize=8)
def build_cutoffs(grid: GridSpec) -> DyadicCutoffs:
    """Cutoff family for ``grid``; requires at least shells up to q = 2."""
    if grid.q_max < 2:
        raise ConfigurationError(f"grid too small: q_max = {grid.q_max} < 2 (need >= 16 samples per axis)")
    return DyadicCutoffs(grid)


def _check_q(cut: DyadicCutoffs, q: int, low: bool = False):
    if low:
        if q < 1:
            raise ConfigurationError("low-pass index must be >= 1")
        return
    if not (-1 <= q <= cut.q_top):
        raise ConfigurationError(f"shell {q} outside [-1, {cut.q_top}]")


def _apply(u: VelocityField, symbol: np.ndarray, tag: str) -> VelocityField:
    uh = rfft_field(u.samples, u.grid)
    out = irfft_field(uh * symbol[None, ..., None], u.grid)
    return VelocityField(u.grid, out, metadata=f"{u.metadata}|{tag}", divergence_free=False, check=False)


def shell_project(u: VelocityField, q: int) -> VelocityField:
    """Return the shell ``u_q``."""
    cut = build_cutoffs(u.grid)
    _check_q(cut, q)
    return _apply(u, cut.phi(q), f"shell{q}")


def low_pass(u: VelocityField, q: int) -> VelocityField:
    """Return ``u_{<q}`` (symbol ``chi(L|k|/2^q)``)."""
    cut = build_cutoffs(u.grid)
    _check_q(cut, q, low=True)
    return _apply(u, cut.chi_low(q), f"low{q}")


def sqrt_low_pass(u: VelocityField, q: int) -> VelocityField:
    """Return ``u~_{<q}`` (symbol ``sqrt(chi(L|k|/2^q))``)."""
    cut = build_cutoffs(u.grid)
    _check_q(cut, q, low=True)
    return _apply(u, cut.sqrt_chi_low(q), f"sqrtlow{q}")


class ShellDecomposition:
    """Materialised Littlewood-Paley shells of a field.

    Shells ``-1 .. q_top`` are stored so that they sum to the field; only
    ``q <= q_max`` are *resolved* (cutoff support strictly inside Nyquist),
    the remaining corner shells are kept for reconstruction and flagged.

    Attributes
    ----------
    grid : GridSpec
    spectrum : ndarray
        Half-spectrum of the input, shape ``(nt, nx, ny', nz', d)``.
    shells : dict[int, ndarray]
        Shell samples keyed by q, each shaped like the input samples.
    """

    def __init__(self, u: VelocityField):
        self.field = u
        self.grid = u.grid
        self.cutoffs = build_cutoffs(u.grid)
        self.spectrum = rfft_field(u.samples, u.grid)
        self.shells = {}
        for q in self.cutoffs.shells:
            a = irfft_field(self.spectrum * self.cutoffs.phi(q)[None, ..., None], self.grid)
            a.setflags(write=False)
            self.shells[q] = a

    @property
    def q_max(self) -> int:
        return self.cutoffs.q_max

    @property
    def q_top(self) -> int:
        return self.cutoffs.q_top

    @property
    def qs(self) -> list:
        return list(self.shells)

    @property
    def resolved_qs(self) -> list:
        return [q for q in self.shells if q <= self.q_max]

    def resolved(self, q: int) -> bool:
        return q <= self.q_max

    def shell(self, q: int) -> VelocityField:
        return VelocityField(self.grid, self.shells[q], metadata=f"{self.field.metadata}|shell{q}", check=False)

    def low(self, q: int) -> np.ndarray:
        """Samples of ``u_{<q} = sum_{p<q} u_p``."""
        out = np.zeros(self.grid.shape)
        for p in range(-1, min(q, self.q_top + 1)):
            out += self.shells[p]
        return out

    def low_spectral(self, q: int) -> np.ndarray:
        """Samples of ``u_{<q}`` via its symbol ``chi(L|k|/2^q)`` (independent route)."""
        return irfft_field(self.spectrum * self.cutoffs.chi_low(q)[None, ..., None], self.grid)

    def band(self, lo: int, hi: int) -> np.ndarray:
        """``sum_{lo <= p <= hi} u_p`` (indices clipped to the stored range)."""
        out = np.zeros(self.grid.shape)
        for p in range(max(lo, -1), min(hi, self.q_top) + 1):
            out += self.shells[p]
        return out

    def reconstruction_error(self) -> float:
        """||sum_q u_q - u||_2 / ||u||_2 (0 for a zero field)."""
        total = np.zeros(self.grid.shape)
        for q in self.shells:
            total += self.shells[q]
        num = float(np.sqrt(np.mean((total - self.field.samples) ** 2)))
        den = float(np.sqrt(np.mean(self.field.samples ** 2)))
        return num / den if den > 0 else num

    def mean_mode_spread(self) -> float:
        """Max spatial variation of ``u_{-1}`` (it must be constant in space)."""
        s = self.shells[-1]
        axes = self.grid.fft_axes
        return float(np.max(np.max(s, axis=axes) - np.min(s, axis=axes)))

    def gradient(self, samples: np.ndarray) -> np.ndarray:
        """Spectral gradient ``G[..., i, j] = d_j f_i`` of a vector sample array."""
        return spectral_gradient(samples, self.grid)


def spectral_gradient(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``G[t, x, y, z, i, j] = d_j f_i`` for samples shaped ``(nt, ..., d)``."""
    fh = rfft_field(samples, grid)
    ks = half_wavenumbers(grid)
    dim = grid.spatial_dim
    out = np.empty(samples.shape + (dim,))
    for j in range(dim):
        out[..., j] = irfft_field(fh * (2j * np.pi * ks[j])[None, ..., None], grid)
    return out


def decompose(u: VelocityField) -> ShellDecomposition:
    """Littlewood-Paley decomposition of ``u`` into shells ``-1 .. q_top``."""
    return ShellDecomposition(u)


def bernstein_ratio(u_q, q: int, r1: float, r2: float, spatial_dim: int = 3):
    """``||u_q||_{r2} / (2^{dim q (1/r1 - 1/r2)} ||u_q||_{r1})`` or ``None`` for a zero shell.

    ``u_q`` may be a :class:`VelocityField` or a sample array.
    """
    if not (1 <= r1 < r2):
        raise ConfigurationError("need 1 <= r1 < r2 <= inf")
    s = u_q.samples if isinstance(u_q, VelocityField) else np.asarray(u_q)
    n1 = lattice_norm(s, r1)
    if n1 == 0.0:
        return None
    n2 = lattice_norm(s, r2)
    inv2 = 0.0 if np.isinf(r2) else 1.0 / r2
    return n2 / (2.0 ** (spatial_dim * q * (1.0 / r1 - inv2)) * n1)


def h_norm_ratios(grid: GridSpec, rs=(1, 2, np.inf)) -> dict:
    """Scale-normalised norms of the kernels ``h_q``.

    ``h_q`` is the shell projection of the unit delta comb, i.e. the inverse
    transform of ``phi_q``.  Returns ``{r: {q: ||h_q||_r / 2^{dim q (r-1)/r}}}``
    for resolved ``q >= 0``; these should be independent of q.
    """
    cut = build_cutoffs(grid)
    out = {r: {} for r in rs}
    for q in range(0, grid.q_max + 1):
        h = irfft_field(cut.phi(q)[None, ...], grid)[0]
        a = np.abs(h)
        for r in rs:
            if np.isinf(r):
                norm, expo = float(a.max()), 1.0
            else:
                norm, expo = float(np.mean(a ** r) ** (1.0 / r)), (r - 1.0) / r
            out[r][q] = norm / 2.0 ** (grid.spatial_dim * q * expo)
    return out


def gradient_ratio(dec: ShellDecomposition, q: int):
    """``||grad u_q||_2 / (lambda_q ||u_q||_2)`` (None for a zero shell)."""
    uq = dec.shells[q]
    n = float(np.sqrt(np.mean(np.sum(uq ** 2, axis=-1))))
    if n == 0.0:
        return None
    G = dec.gradient(uq)
    ng = float(np.sqrt(np.mean(np.sum(G ** 2, axis=(-1, -2)))))
    return ng / (float(dec.grid.lam(q)) * n)
