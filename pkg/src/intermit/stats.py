"""Per-shell moments, active volumes, intermittent dimension and derived scales.

For each shell ``u_q`` the moments ``m_p = <|u_q|^p>`` are space-time lattice
means.  Everything else follows algebraically:

* active volume      ``V_q = L^dim m_2^3 / m_3^2``
* velocity           ``U_q = ((L^dim / V_q) m_3)^(1/3)``
* turnover time      ``t_q = ell_q / U_q``
* eddy energy        ``K_q = (L^dim / V_q) m_2``
* flux per volume    ``eps_q = U_q^3 / ell_q``  (also ``K_q / t_q``)
* dimension          ``d_q = dim - log2(L^dim / V_q) / q``
* spectrum           ``E_q = m_2 / lambda_q``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ConfigurationError, GridSpec, upsample_half
from .lp import ShellDecomposition

__all__ = [
    "INACTIVE_REL",
    "ShellStats",
    "DimensionSummary",
    "EpsilonSummary",
    "Scales",
    "shell_moments",
    "active_volume",
    "default_window",
    "dimension_summary",
    "shell_dimensions",
    "characteristic_scales",
    "energy_spectrum",
    "onsager_epsilons",
    "localization_kernel",
    "two_sided_spectrum_bound",
    "fit_slope",
]

#: shells with m_2 below this fraction of the largest m_2 are inactive
INACTIVE_REL = 1e-30


def fit_slope(x, y) -> tuple:
    """Least-squares slope and RMS residual of ``y`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res ** 2)))


@dataclass
class ShellStats:
    """Moments and derived per-shell quantities.

    Arrays are indexed in parallel with ``qs``; inactive shells carry NaN in
    every derived quantity.
    """

    grid: GridSpec
    qs: np.ndarray
    q_max: int
    moments: dict
    peak: np.ndarray
    origin: np.ndarray
    active: np.ndarray = field(init=False)

    def __post_init__(self):
        m2 = self.moments[2]
        top = float(np.max(m2)) if m2.size else 0.0
        self.active = (m2 > INACTIVE_REL * top) & (m2 > 0.0) if top > 0 else np.zeros(m2.shape, bool)

    @property
    def dim(self) -> int:
        return self.grid.spatial_dim

    @property
    def lam(self) -> np.ndarray:
        return self.grid.lam(self.qs.astype(float))

    @property
    def ell(self) -> np.ndarray:
        return self.grid.ell(self.qs.astype(float))

    @property
    def resolved(self) -> np.ndarray:
        return self.qs <= self.q_max

    def index(self, q: int) -> int:
        return int(np.nonzero(self.qs == q)[0][0])

    def m(self, p) -> np.ndarray:
        return self.moments[p]

    def norm(self, p) -> np.ndarray:
        """Normalised L^p norms ``m_p^(1/p)``."""
        return self.moments[p] ** (1.0 / p)

    def flux_scale(self) -> np.ndarray:
        """``lambda_q m_3`` per shell."""
        return self.lam * self.moments[3]


def shell_moments(dec: ShellDecomposition, ps=(2, 3), oversample: int = 2) -> ShellStats:
    """Compute ``m_p = <|u_q|^p>`` for every stored shell and each ``p`` in ``ps`` (plus 2 and 3).

    Resolved shells are band-limited well inside Nyquist, but ``|u_q|^p`` is
    not; with ``oversample > 1`` the bracket is evaluated on the trigonometric
    interpolant sampled on a lattice refined by that factor per axis, which
    removes the aliasing of the top resolved shells.  ``oversample=1`` gives
    the plain lattice mean.  Unresolved corner shells always use the lattice.
    """
    ps = sorted(set(float(p) for p in ps) | {2.0, 3.0})
    if min(ps) < 1:
        raise ConfigurationError("moment orders must be >= 1")
    if int(oversample) < 1:
        raise ConfigurationError("oversample must be >= 1")
    grid = dec.grid
    qs = np.array(dec.qs)
    peaks, origins = [], []
    rows = {p: [] for p in ps}
    for q in dec.qs:
        lattice = np.sqrt(np.sum(dec.shells[q] ** 2, axis=-1))
        peaks.append(float(lattice.max()))
        origins.append(float(np.mean(lattice[:, 0, 0, 0])))
        if oversample > 1 and dec.resolved(q):
            sums = {p: 0.0 for p in ps}
            symbol = dec.cutoffs.phi(q)
            for t in range(grid.nt):
                mag2 = 0.0
                for c in range(grid.spatial_dim):
                    fine = upsample_half(dec.spectrum[t, ..., c] * symbol, grid, int(oversample))
                    mag2 = mag2 + fine * fine
                a = np.sqrt(mag2)
                for p in ps:
                    sums[p] += float(np.mean(mag2)) if p == 2.0 else float(np.mean(a ** p))
            for p in ps:
                rows[p].append(sums[p] / grid.nt)
        else:
            for p in ps:
                rows[p].append(float(np.mean(lattice * lattice)) if p == 2.0 else float(np.mean(lattice ** p)))
    moments = {}
    for p in ps:
        key = int(p) if float(p).is_integer() else p
        moments[key] = np.array(rows[p])
    return ShellStats(grid, qs, dec.q_max, moments, np.array(peaks), np.array(origins))


def active_volume(stats: ShellStats) -> np.ndarray:
    """``V_q = L^dim m_2^3 / m_3^2`` (NaN for inactive shells)."""
    m2, m3 = stats.m(2), stats.m(3)
    V = np.full(m2.shape, np.nan)
    act = stats.active
    if np.any(act & (m3 <= 0)):
        raise ConfigurationError("internal error: active shell with vanishing third moment")
    V[act] = stats.grid.volume * m2[act] ** 3 / m3[act] ** 2
    return V


def default_window(q_max: int) -> tuple:
    """Default fit window ``[3, max(q_max - 2, 5)]`` clipped to ``q_max``.

    The nominal window ``[3, q_max - 2]`` holds fewer than three shells on
    grids below 512 points per axis; it is widened to three shells there.
    """
    lo = 3
    hi = min(q_max, max(q_max - 2, lo + 2))
    return (lo, hi)


@dataclass
class DimensionSummary:
    h: float
    d: float
    dq: dict
    window: tuple
    residual: float
    slope_full: float
    spatial_dim: int

    def as_dict(self) -> dict:
        return {
            "h": self.h, "d": self.d, "window": list(self.window), "fit_residual": self.residual,
            "slope_full_window": self.slope_full, "d_q": {str(k): v for k, v in self.dq.items()},
        }


def shell_dimensions(V, qs, spatial_dim: int, L: float = 1.0) -> dict:
    """Per-shell dimensions ``d_q = dim - log2(L^dim / V_q) / q`` for active shells q >= 1."""
    dq = {}
    with np.errstate(divide="ignore", invalid="ignore"):
        y_all = np.log2(L ** spatial_dim / np.asarray(V, dtype=float))
    for q, y in zip(np.asarray(qs), y_all):
        if q >= 1 and np.isfinite(y):
            dq[int(q)] = float(spatial_dim - y / q)
    return dq


def dimension_summary(V, qs, spatial_dim: int, L: float = 1.0, window=None, q_max=None) -> DimensionSummary:
    """Co-dimension ``h`` (liminf proxy) and ``d = dim - h``.

    ``h`` is the minimum least-squares slope of ``log2(L^dim / V_q)`` against
    ``q`` over the trailing sub-windows ``[q', q_hi]`` (at least three shells)
    of the fit window.
    """
    qs = np.asarray(qs)
    V = np.asarray(V, dtype=float)
    if window is None:
        if q_max is None:
            q_max = int(qs.max())
        window = default_window(q_max)
    lo, hi = int(window[0]), int(window[1])
    y_all = np.log2(L ** spatial_dim / V)
    dq = shell_dimensions(V, qs, spatial_dim, L)
    sel = (qs >= lo) & (qs <= hi) & np.isfinite(y_all)
    if int(np.sum(sel)) < 3:
        raise ConfigurationError(f"need >= 3 active shells in window [{lo}, {hi}]")
    xq, yq = qs[sel].astype(float), y_all[sel]
    slope_full, resid = fit_slope(xq, yq)
    slopes = [fit_slope(xq[i:], yq[i:])[0] for i in range(0, len(xq) - 2)]
    h = float(min(slopes))
    return DimensionSummary(h=h, d=spatial_dim - h, dq=dq, window=(lo, hi), residual=resid,
                            slope_full=slope_full, spatial_dim=spatial_dim)


@dataclass
class Scales:
    U: np.ndarray
    t: np.ndarray
    K: np.ndarray
    eps: np.ndarray
    eps_alt: np.ndarray

    def max_eps_mismatch(self) -> float:
        ok = np.isfinite(self.eps) & (self.eps > 0)
        if not np.any(ok):
            return 0.0
        return float(np.max(np.abs(self.eps[ok] - self.eps_alt[ok]) / self.eps[ok]))


def characteristic_scales(stats: ShellStats) -> Scales:
    """Eddy velocity, turnover time, eddy energy and flux per shell."""
    V = active_volume(stats)
    Ld = stats.grid.volume
    m2, m3, ell = stats.m(2), stats.m(3), stats.ell
    with np.errstate(invalid="ignore", divide="ignore"):
        U = (Ld / V * m3) ** (1.0 / 3.0)
        t = ell / U
        K = Ld / V * m2
        eps = U ** 3 / ell
        # energy over turnover time, written without U: L^{4/3 dim}/(ell V^{4/3}) m2 m3^{1/3}
        eps_alt = Ld ** (4.0 / 3.0) / (ell * V ** (4.0 / 3.0)) * m2 * m3 ** (1.0 / 3.0)
    return Scales(U=U, t=t, K=K, eps=eps, eps_alt=eps_alt)


@dataclass
class EpsilonSummary:
    eps: float
    eps_bar: float
    eps_lower: float | None
    window: tuple
    q_bar: int

    def as_dict(self) -> dict:
        return {"eps": self.eps, "eps_bar": self.eps_bar, "eps_lower": self.eps_lower,
                "window": list(self.window), "q_of_eps_bar": self.q_bar}


def onsager_epsilons(stats: ShellStats, window=None, mean_abs_pi: dict | None = None) -> EpsilonSummary:
    """``eps_bar = max_q lambda_q m_3`` over resolved shells q >= 0; ``eps`` = max over the upper half of the window.

    ``mean_abs_pi`` maps q to ``<|pi_q|>``; when given, ``eps_lower`` is its
    minimum over the window.
    """
    if window is None:
        window = default_window(stats.q_max)
    lo, hi = window
    f = stats.flux_scale()
    sel_all = (stats.qs >= 0) & stats.resolved & stats.active
    if not np.any(sel_all):
        return EpsilonSummary(0.0, 0.0, None, tuple(window), -1)
    fa = np.where(sel_all, f, -np.inf)
    i_bar = int(np.argmax(fa))
    eps_bar = float(fa[i_bar])
    upper_lo = lo + (hi - lo + 1) // 2
    sel_up = (stats.qs >= upper_lo) & (stats.qs <= hi) & stats.resolved
    vals = np.where(stats.active[sel_up], f[sel_up], 0.0)
    eps = float(np.max(vals)) if vals.size else 0.0
    eps_lower = None
    if mean_abs_pi:
        w = [v for q, v in mean_abs_pi.items() if lo <= q <= hi]
        if w:
            eps_lower = float(min(w))
    return EpsilonSummary(eps=eps, eps_bar=eps_bar, eps_lower=eps_lower, window=tuple(window),
                          q_bar=int(stats.qs[i_bar]))


def energy_spectrum(stats: ShellStats, dq: dict, eps_bar: float) -> dict:
    """Spectrum ``E_q = m_2/lambda_q`` and the intermittent upper bound.

    The bound is ``eps_bar^{2/3} lambda_q^{-5/3} (L lambda_q)^{-(dim - d_q)/3}``,
    which reduces to the three-dimensional form with exponent ``1 - d_q/3``.
    Returns per-shell rows plus the worst relative slack of the bound and the
    worst relative defect of the underlying identity
    ``E_q = (lambda_q m_3)^{2/3} lambda_q^{-5/3} (L lambda_q)^{(d_q - dim)/3}`` over shells q >= 1.
    """
    if eps_bar is None:
        raise ConfigurationError("energy spectrum bound needs eps_bar")
    L, dim = stats.grid.L, stats.dim
    rows = []
    worst_slack, worst_identity = 0.0, 0.0
    for i, q in enumerate(stats.qs):
        q = int(q)
        if q < 0 or not stats.active[i] or not stats.resolved[i]:
            continue
        lam = float(stats.lam[i])
        m2, m3 = float(stats.m(2)[i]), float(stats.m(3)[i])
        E = m2 / lam
        Ll = L * lam
        d = dq.get(q, dim)
        corr = Ll ** ((d - dim) / 3.0) if q >= 1 else 1.0
        bound = eps_bar ** (2.0 / 3.0) * lam ** (-5.0 / 3.0) * corr
        ident = (lam * m3) ** (2.0 / 3.0) * lam ** (-5.0 / 3.0) * corr
        worst_slack = max(worst_slack, (E - bound) / bound)
        if q >= 1:  # d_q is undefined at q = 0, where (L lambda)^x = 1 cannot encode V_0
            worst_identity = max(worst_identity, abs(E - ident) / E)
        rows.append({"q": q, "kappa": lam, "E": E, "bound": bound, "ratio": E / bound})
    return {"rows": rows, "max_relative_excess": worst_slack, "max_identity_defect": worst_identity}


def localization_kernel(j) -> np.ndarray:
    """A-dimensional kernel: ``2^{2j/3}`` for ``j <= 0`` and ``2^{-4j/3}`` for ``j > 0``."""
    j = np.asarray(j, dtype=float)
    return np.where(j <= 0, 2.0 ** (2.0 * j / 3.0), 2.0 ** (-4.0 * j / 3.0))


def two_sided_spectrum_bound(stats: ShellStats, eps_bar: float, eps_lower: float | None = None) -> dict:
    """Middle term ``sum_p K_{q-p}^{2/3} lambda_p^{5/3} (L lambda_p)^{(dim-d_p)/3} E_p`` of the two-sided estimate.

    It equals ``sum_p K_{q-p}^{2/3} (lambda_p m_3(p))^{2/3}`` identically and
    is reported together with its ratios to ``eps_bar^{2/3}`` and
    ``eps_lower^{2/3}``.
    """
    sel = (stats.qs >= 0) & stats.resolved & stats.active
    qs = stats.qs[sel]
    f = (stats.lam[sel] * stats.m(3)[sel]) ** (2.0 / 3.0)
    rows = []
    for q in qs:
        mid = float(np.sum(localization_kernel(q - qs) ** (2.0 / 3.0) * f))
        row = {"q": int(q), "middle": mid,
               "upper_ratio": mid / eps_bar ** (2.0 / 3.0) if eps_bar else None}
        if eps_lower:
            row["lower_ratio"] = eps_lower ** (2.0 / 3.0) / mid if mid > 0 else None
        rows.append(row)
    return {"rows": rows}
