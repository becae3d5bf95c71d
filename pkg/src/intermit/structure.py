"""Velocity increments, isotropic structure functions and multifractal volumes.

Increments ``delta_y u(x) = u(x + y) - u(x)`` are evaluated by spectral
shifting (multiplication by ``exp(2 pi i k.y)``), which is exact for the
trigonometric interpolant of the samples and handles off-lattice ``y``.
Direction averages use equal-weight node sets: a Fibonacci lattice on the
sphere in 3D and equally spaced angles on the circle in 2D.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .atoms import active_region
from .grid import ConfigurationError, GridSpec, VelocityField, half_wavenumbers, irfft_field, rfft_field
from .stats import ShellStats, dimension_summary, fit_slope


# ---------------------------------------------------------------------------
# direction nodes
# ---------------------------------------------------------------------------

def direction_nodes(n_theta: int, spatial_dim: int = 3, rotation: np.ndarray | None = None) -> np.ndarray:
    """Equal-weight unit vectors, shape ``(n_theta, 3)``.

    3D: Fibonacci lattice ``z_i = 1 - (2i + 1)/n``, azimuth ``i * golden angle``.
    2D: angles ``2 pi i / n`` in the (x, y) plane.  ``rotation`` (3x3) is
    applied to every node; used to check the isotropy of the estimator.
    """
    n = int(n_theta)
    if n < 1:
        raise ConfigurationError("n_theta must be positive")
    i = np.arange(n)
    if spatial_dim == 3:
        z = 1.0 - (2.0 * i + 1.0) / n
        r = np.sqrt(1.0 - z * z)
        az = i * np.pi * (3.0 - np.sqrt(5.0))
        nodes = np.stack([r * np.cos(az), r * np.sin(az), z], axis=1)
    elif spatial_dim == 2:
        th = 2.0 * np.pi * i / n
        nodes = np.stack([np.cos(th), np.sin(th), np.zeros(n)], axis=1)
    else:
        raise ConfigurationError("spatial_dim must be 2 or 3")
    if rotation is not None:
        nodes = nodes @ np.asarray(rotation, dtype=float).T
    return nodes


def node_set_name(spatial_dim: int) -> str:
    return "fibonacci-sphere" if spatial_dim == 3 else "circle-equipartition"


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------

def _shift_symbol(grid: GridSpec, y) -> np.ndarray:
    """``exp(2 pi i k.y)`` on the half-spectrum layout, built from separable 1D factors."""
    ks = half_wavenumbers(grid)
    y = np.asarray(y, dtype=float)
    out = np.exp(2j * np.pi * ks[0] * y[0]) * np.exp(2j * np.pi * ks[1] * y[1])
    if grid.spatial_dim == 3:
        out = out * np.exp(2j * np.pi * ks[2] * y[2])
    return out


class IncrementEngine:
    """Caches the half spectrum of a field so many shifts reuse one transform."""

    def __init__(self, u: VelocityField):
        self.field = u
        self.grid = u.grid
        self.spectrum = rfft_field(u.samples, u.grid)
        # components with an identically zero spectrum have zero increments
        self.components = [c for c in range(self.spectrum.shape[-1]) if np.any(self.spectrum[..., c])]

    def increment(self, y) -> np.ndarray:
        """``u(x + y) - u(x)`` on the lattice (periodic)."""
        sym = (_shift_symbol(self.grid, y) - 1.0)[None, ..., None]
        out = np.zeros(self.field.samples.shape)
        if self.components:
            c = self.components
            out[..., c] = irfft_field(self.spectrum[..., c] * sym, self.grid)
        return out

    def moments(self, y, ps) -> dict:
        mag = np.sqrt(np.sum(self.increment(y) ** 2, axis=-1))
        out = {}
        for p in ps:
            if p == 2:
                out[p] = float(np.mean(mag * mag))
            elif p == 3:
                out[p] = float(np.mean(mag * mag * mag))
            else:
                out[p] = float(np.mean(mag ** p))
        return out

    def parseval_s2(self, y) -> float:
        """``<|delta_y u|^2>`` from the spectrum alone (Parseval)."""
        sym = np.abs(_shift_symbol(self.grid, y) - 1.0) ** 2
        w = _half_weights(self.grid)
        return float(np.sum(w[None, ..., None] * sym[None, ..., None] * np.abs(self.spectrum) ** 2) / self.grid.nt)


def _half_weights(grid: GridSpec) -> np.ndarray:
    """Multiplicity of each half-spectrum coefficient in the full spectrum."""
    ax = grid.fft_axes[-1]
    n = grid.n_active[-1]
    m = n // 2 + 1
    w = np.full(m, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    shape = [1, 1, 1]
    shape[ax - 1] = m
    return w.reshape(shape)


def displacement_moment(u: VelocityField, y, p: float) -> float:
    """``<|u(. + y) - u|^p>`` over the space-time lattice."""
    return IncrementEngine(u).moments(y, [p])[p]


# ---------------------------------------------------------------------------
# structure functions
# ---------------------------------------------------------------------------

@dataclass
class StructureCurve:
    """Direction-averaged ``S_p(ell)`` for one or more orders ``p``."""

    ells: np.ndarray
    values: dict
    n_theta: int
    node_set: str
    spatial_dim: int

    def S(self, p) -> np.ndarray:
        return self.values[p]

    def log_slope(self, p, lo: float | None = None, hi: float | None = None) -> float:
        sel = np.ones(self.ells.shape, bool)
        if lo is not None:
            sel &= self.ells >= lo * (1 - 1e-12)
        if hi is not None:
            sel &= self.ells <= hi * (1 + 1e-12)
        v = self.values[p][sel]
        if np.count_nonzero(sel) < 2 or np.any(v <= 0):
            raise ConfigurationError("log-slope needs at least two positive samples")
        return fit_slope(np.log(self.ells[sel]), np.log(v))[0]

    def rows(self) -> list:
        return [(p, float(l), float(v)) for p in sorted(self.values) for l, v in zip(self.ells, self.values[p])]


def structure_function(u: VelocityField, ells, ps=(2,), n_theta: int = 64,
                       rotation: np.ndarray | None = None) -> StructureCurve:
    """``S_p(ell)`` = mean over equal-weight directions of ``<|delta_{ell theta} u|^p>``."""
    ells = np.asarray(ells, dtype=float)
    if np.any(ells < 0) or np.any(ells >= u.grid.L):
        raise ConfigurationError("separations must lie in [0, L)")
    if n_theta < 32:
        raise ConfigurationError("direction quadrature needs n_theta >= 32")
    dim = u.grid.spatial_dim
    nodes = direction_nodes(n_theta, dim, rotation)
    eng = IncrementEngine(u)
    ps = list(ps)
    vals = {p: np.zeros(ells.size) for p in ps}
    for i, ell in enumerate(ells):
        if ell == 0:
            continue
        acc = {p: 0.0 for p in ps}
        for e in nodes:
            m = eng.moments(ell * e, ps)
            for p in ps:
                acc[p] += m[p]
        for p in ps:
            vals[p][i] = acc[p] / len(nodes)
    return StructureCurve(ells, vals, int(n_theta), node_set_name(dim), dim)


def default_separations(grid: GridSpec, count: int = 6) -> np.ndarray:
    """Geometric separations from 4 grid spacings to ``L/8``."""
    h = grid.L / max(grid.n_active)
    return np.geomspace(4 * h, grid.L / 8, count)


# ---------------------------------------------------------------------------
# bounds and exponents
# ---------------------------------------------------------------------------

def zeta(p, d: float, spatial_dim: int = 3) -> float:
    """Scaling exponent ``p/3 + (dim - d)(1 - p/3)``; equals 1 at ``p = 3`` for every d."""
    p = float(p)
    return p / 3.0 + (spatial_dim - d) * (1.0 - p / 3.0)


def sof_bound_check(curve: StructureCurve, eps_bar: float, d: float, delta: float = 0.1,
                    L: float = 1.0) -> dict:
    """Smallest ``C`` with ``S_2 <= C eps^{2/3} ell^{2/3} [(ell/L)^a + C_delta (ell/L)^{4/3}]``.

    ``a = (dim - d)/3 - delta``.  ``(A, B)`` come from a non-negative
    least-squares fit of ``S_2 / (eps^{2/3} ell^{2/3})`` on the two powers;
    ``C_delta = B/A`` and ``C`` is the largest ratio of data to the bracket.
    When the fit puts no weight on the first branch, ``C_delta`` is reported
    as None and ``C`` refers to the ``(ell/L)^{4/3}`` branch alone.
    """
    if not (0 < delta < 1):
        raise ConfigurationError("delta must lie in (0, 1)")
    if eps_bar <= 0:
        raise ConfigurationError("eps_bar must be positive")
    sel = curve.ells > 0
    ell = curve.ells[sel]
    S2 = curve.values[2][sel]
    a = (curve.spatial_dim - d) / 3.0 - delta
    x = ell / L
    pref = eps_bar ** (2.0 / 3.0) * ell ** (2.0 / 3.0)
    y = S2 / pref
    M = np.stack([x ** a, x ** (4.0 / 3.0)], axis=1)
    # scale the columns so the fit is not dominated by magnitude
    norms = np.maximum(np.linalg.norm(M, axis=0), 1e-300)
    coef, _ = nnls(M / norms, y)
    A, B = coef / norms
    if A > 0:
        C_delta = float(B / A)
        bracket = x ** a + C_delta * x ** (4.0 / 3.0)
        dominant = "first" if x[0] ** a >= C_delta * x[0] ** (4.0 / 3.0) else "4/3"
    else:
        C_delta = None
        bracket = x ** (4.0 / 3.0)
        dominant = "4/3"
    C = float(np.max(y / bracket))
    return {"C": C, "C_delta": C_delta, "exponent_a": a, "delta": delta, "d": d,
            "dominant_small_ell": dominant, "fit": [float(A), float(B)]}


# ---------------------------------------------------------------------------
# multifractal volumes
# ---------------------------------------------------------------------------

@dataclass
class MultifractalStats:
    """Per (q, p): ``V_q^(p)``, threshold speed ``s_q^(p)`` and region masks."""

    qs: np.ndarray
    ps: list
    volumes: dict
    speeds: dict
    regions: dict = field(default_factory=dict)
    dimensions: dict = field(default_factory=dict)

    def nesting(self) -> dict:
        """``A_q^(p'') subset A_q^(p')`` for consecutive orders, per shell."""
        out = {}
        for q in sorted({k[0] for k in self.regions}):
            ok = True
            for a, b in zip(self.ps, self.ps[1:]):
                ra, rb = self.regions.get((q, a)), self.regions.get((q, b))
                if ra is not None and rb is not None:
                    ok &= not bool(np.any(rb.mask & ~ra.mask))
            out[int(q)] = ok
        return out

    def volumes_monotone(self) -> bool:
        """``V_q^(p)`` nonincreasing in p for every active shell."""
        ok = True
        for a, b in zip(self.ps, self.ps[1:]):
            va, vb = self.volumes[a], self.volumes[b]
            sel = np.isfinite(va) & np.isfinite(vb)
            ok &= bool(np.all(vb[sel] <= va[sel] * (1 + 1e-12)))
        return ok

    def as_dict(self) -> dict:
        out = {"ps": list(self.ps), "shells": []}
        nest = self.nesting()
        for i, q in enumerate(self.qs):
            row = {"q": int(q), "nested": nest.get(int(q))}
            for p in self.ps:
                row[f"V_{p}"] = _finite(self.volumes[p][i])
                row[f"s_{p}"] = _finite(self.speeds[p][i])
                r = self.regions.get((int(q), p))
                if r is not None:
                    row[f"fraction_{p}"] = r.fraction
            out["shells"].append(row)
        out["dimensions"] = {str(p): v for p, v in self.dimensions.items()}
        out["volumes_monotone_in_p"] = self.volumes_monotone()
        return out


def _finite(x) -> float | None:
    x = float(x)
    return x if np.isfinite(x) else None


def multifractal_volumes(stats: ShellStats, p: float) -> tuple:
    """``(V^(p), s^(p))``: ``L^dim m_2^{p/(p-2)} / m_p^{2/(p-2)}`` and ``(m_p/m_2)^{1/(p-2)}``."""
    if p <= 2:
        raise ConfigurationError("multifractal order must exceed 2")
    key = int(p) if float(p).is_integer() else p
    if key not in stats.moments:
        raise ConfigurationError(f"moment m_{key} was not computed")
    m2, mp = stats.m(2), stats.m(key)
    V = np.full(m2.shape, np.nan)
    s = np.full(m2.shape, np.nan)
    act = stats.active
    V[act] = stats.grid.volume * m2[act] ** (p / (p - 2)) / mp[act] ** (2.0 / (p - 2))
    s[act] = (mp[act] / m2[act]) ** (1.0 / (p - 2))
    return V, s


def multifractal_stats(stats: ShellStats, atoms: dict, sigma, ps=(3, 4), window=None) -> MultifractalStats:
    """Volumes, thresholds and regions for every order in ``ps`` (all > 2).

    ``atoms`` maps q to :class:`AtomSet`; the same ``sigma`` schedule is used
    for every order.  Dimensions ``d^(p)`` use the same window as ``d``.
    """
    ps = sorted(ps)
    volumes, speeds, regions, dims = {}, {}, {}, {}
    for p in ps:
        V, s = multifractal_volumes(stats, p)
        volumes[p], speeds[p] = V, s
        for q, a in atoms.items():
            i = stats.index(q)
            if not stats.active[i]:
                continue
            regions[(int(q), p)] = active_region(a, stats, sigma, threshold_speed=float(s[i]))
        try:
            dims[p] = dimension_summary(V, stats.qs, stats.dim, stats.grid.L, window=window,
                                        q_max=stats.q_max).d
        except ConfigurationError:
            dims[p] = None
    return MultifractalStats(stats.qs, ps, volumes, speeds, regions, dims)


__all__ = [
    "direction_nodes", "node_set_name", "IncrementEngine", "displacement_moment",
    "StructureCurve", "structure_function", "default_separations", "zeta",
    "sof_bound_check", "MultifractalStats", "multifractal_volumes", "multifractal_stats",
]
