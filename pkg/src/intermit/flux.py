"""Energy flux through dyadic shells, its localisation and local regularity.

Tensor convention: ``(a (x) b) : grad c = sum_ij a_j b_i d_j c_i`` -- the first
slot advects.  For a divergence-free field the flux through shell ``q`` is

    Pi_q(t) = int (u (x) u) : grad u_{<q} dx = int (u (x) u_{>=q}) : grad u_{<q} dx,

the second form following from ``int (u (x) u_{<q}) : grad u_{<q} = 0``.  The
density ``pi_q`` is the integrand of the second form, written as the sum over
shell triples ``(p', p'', p''')`` with ``p'' >= q`` and ``p''' < q``.

Everything is pseudo-spectral: gradients are spectral, products are taken
pointwise on the lattice.  Integrals over the box are ``L^dim`` times lattice
means; time integrals use the rectangle rule with ``dt = T / nt``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ConfigurationError, GridSpec, coordinates, half_wavenumbers, irfft_field, rfft_field
from .lp import ShellDecomposition, build_cutoffs, chi, spectral_gradient
from .stats import ShellStats, localization_kernel

INDEX_SETS = ("complete", "paper")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _contract(adv: np.ndarray, b: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Pointwise ``sum_ij adv_j b_i G_ij`` with ``G[..., i, j] = d_j c_i``."""
    return np.einsum("...j,...i,...ij->...", adv, b, G, optimize=True)


def _shell_sum(dec: ShellDecomposition, lo: int, hi: int, t: int) -> np.ndarray:
    out = np.zeros(dec.grid.shape[1:])
    for p in range(max(lo, -1), min(hi, dec.q_top) + 1):
        out += dec.shells[p][t]
    return out


def _two_thirds(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Zero every mode with ``|k_i| >= n_i / 3`` on some axis (2/3 rule)."""
    ks = half_wavenumbers(grid)
    keep = np.ones(np.broadcast_shapes(*(k.shape for k in ks)), dtype=bool)
    for k, n in zip(ks[: grid.spatial_dim], grid.n_active):
        keep &= np.abs(k * grid.L) < n / 3.0
    fh = rfft_field(samples[None], grid)
    return irfft_field(fh * keep[None, ..., None], grid)[0]


def _grad(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    return spectral_gradient(samples[None], grid)[0]


def _check_q(dec: ShellDecomposition, q: int):
    if q < 1:
        raise ConfigurationError("the flux is defined for q >= 1")
    missing = [p for p in range(-1, q + 1) if p not in dec.shells]
    if missing:
        raise ConfigurationError(f"missing shells {missing}")


# ---------------------------------------------------------------------------
# flux fields
# ---------------------------------------------------------------------------

@dataclass
class FluxField:
    """Flux density ``pi[t, x, y, z]`` through shell ``q`` and its box integral ``Pi[t]``.

    ``K`` is set for truncated densities.  ``diagnostics`` holds per-time
    series of the route comparison and the antisymmetry integral.
    """

    q: int
    grid: GridSpec
    pi: np.ndarray
    Pi: np.ndarray
    K: int | None = None
    index_set: str = "complete"
    diagnostics: dict = field(default_factory=dict)

    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.pi)))

    def mean(self) -> float:
        return float(np.mean(self.pi))

    def time_integral(self) -> float:
        """``int_0^T Pi_q dt`` (rectangle rule)."""
        return float(np.sum(self.Pi) * self.grid.dt)

    def space_time_integral(self) -> float:
        """``<pi_q> T L^dim``; equals :meth:`time_integral` up to round-off."""
        return self.mean() * self.grid.T * self.grid.volume


def flux_density(dec: ShellDecomposition, q: int, index_set: str = "complete",
                 dealias: bool = False, diagnostics: bool = True) -> FluxField:
    """Flux density through shell ``q``.

    ``index_set="complete"`` sums all triples with ``p'' >= q > p'''`` and any
    advecting shell ``p'``; this equals ``(u (x) u_{>=q}) : grad u_{<q}``
    pointwise.  ``index_set="paper"`` keeps only ``p' >= q - 1`` and
    ``|p' - p''| < 2`` (a band-neighbour restriction of the advecting shell).

    With ``diagnostics`` the density is also computed by the independent route
    that builds ``u_{<q}`` from its cutoff symbol and ``u_{>=q} = u - u_{<q}``;
    the diagnostics also carry the full trilinear integral
    ``int (u (x) u) : grad u_{<q}`` and the antisymmetry integral
    ``int (u (x) u_{<q}) : grad u_{<q}`` with a scale for each.
    ``dealias`` applies the 2/3 rule to every factor before the products.
    """
    _check_q(dec, q)
    if index_set not in INDEX_SETS:
        raise ConfigurationError(f"index_set must be one of {INDEX_SETS}")
    grid = dec.grid
    nt = grid.nt
    vol = grid.volume
    pi = np.empty(grid.shape[:-1])
    diag = {k: np.zeros(nt) for k in ("Pi_direct", "Pi_full", "antisym", "antisym_scale", "pi_scale")}
    low_direct = None
    for t in range(nt):
        u = dec.field.samples[t]
        lo = _shell_sum(dec, -1, q - 1, t)
        if dealias:
            u, lo = _two_thirds(u, grid), _two_thirds(lo, grid)
        G = _grad(lo, grid)
        if index_set == "complete":
            hi = _shell_sum(dec, q, dec.q_top, t)
            if dealias:
                hi = _two_thirds(hi, grid)
            pi[t] = _contract(u, hi, G)
        else:
            acc = np.zeros(grid.shape[1:-1])
            for p2 in range(q, dec.q_top + 1):
                b = dec.shells[p2][t]
                adv = _shell_sum(dec, max(q - 1, p2 - 1), p2 + 1, t)
                if dealias:
                    b, adv = _two_thirds(b, grid), _two_thirds(adv, grid)
                acc += _contract(adv, b, G)
            pi[t] = acc
        if diagnostics:
            if low_direct is None:
                low_direct = dec.low_spectral(q)
            lo_d = low_direct[t]
            if dealias:
                lo_d = _two_thirds(lo_d, grid)
            Gd = _grad(lo_d, grid)
            diag["Pi_direct"][t] = vol * float(np.mean(_contract(u, u - lo_d, Gd)))
            diag["Pi_full"][t] = vol * float(np.mean(_contract(u, u, G)))
            diag["antisym"][t] = vol * float(np.mean(_contract(u, lo, G)))
            gnorm = np.sqrt(np.sum(G ** 2, axis=(-2, -1)))
            un = np.linalg.norm(u, axis=-1)
            diag["antisym_scale"][t] = vol * float(np.mean(un * np.linalg.norm(lo, axis=-1) * gnorm))
            diag["pi_scale"][t] = vol * float(np.mean(un * un * gnorm))
    Pi = vol * np.mean(pi, axis=tuple(range(1, pi.ndim)))
    return FluxField(q=q, grid=grid, pi=pi, Pi=Pi, index_set=index_set,
                     diagnostics=diag if diagnostics else {})


def route_defect(ff: FluxField) -> float:
    """``max_t |Pi_shells - Pi_direct| / max_t scale`` (0 for a zero field)."""
    d = ff.diagnostics
    scale = float(np.max(d["pi_scale"]))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(ff.Pi - d["Pi_direct"]))) / scale


def antisymmetry_defect(ff: FluxField) -> float:
    """``max_t |int (u (x) u_{<q}) : grad u_{<q}| / scale``."""
    d = ff.diagnostics
    scale = float(np.max(d["antisym_scale"]))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(d["antisym"]))) / scale


def summand_set(q: int, K: int | None, q_top: int, index_set: str = "complete") -> set:
    """Triples ``(p', p'', p''')`` entering the (truncated) density."""
    out = set()
    lo_all = -1 if K is None else q - K
    hi_all = q_top if K is None else min(q + K, q_top)
    for p2 in range(q, hi_all + 1):
        for p3 in range(max(-1, lo_all), q):
            for p1 in range(max(-1, lo_all), hi_all + 1):
                if index_set == "paper" and (p1 < q - 1 or abs(p1 - p2) >= 2):
                    continue
                out.add((p1, p2, p3))
    return out


def truncated_density(dec: ShellDecomposition, q: int, K: int, index_set: str = "complete") -> FluxField:
    """Density restricted to triples with every index in ``[q - K, q + K]``."""
    _check_q(dec, q)
    if not (1 <= K < q):
        raise ConfigurationError("truncation needs 1 <= K < q")
    grid = dec.grid
    pi = np.empty(grid.shape[:-1])
    a, b = q - K, q + K
    for t in range(grid.nt):
        lo = _shell_sum(dec, a, q - 1, t)
        G = _grad(lo, grid)
        if index_set == "complete":
            pi[t] = _contract(_shell_sum(dec, a, b, t), _shell_sum(dec, q, b, t), G)
        else:
            acc = np.zeros(grid.shape[1:-1])
            for p2 in range(q, min(b, dec.q_top) + 1):
                adv = _shell_sum(dec, max(a, q - 1, p2 - 1), min(b, p2 + 1), t)
                acc += _contract(adv, dec.shells[p2][t], G)
            pi[t] = acc
    Pi = grid.volume * np.mean(pi, axis=tuple(range(1, pi.ndim)))
    return FluxField(q=q, grid=grid, pi=pi, Pi=Pi, K=K, index_set=index_set)


def localization_table(dec: ShellDecomposition, q: int, full: FluxField | None = None,
                       index_set: str = "complete") -> dict:
    """``K -> <|pi_q - pi_q^K|>`` for ``K = 1 .. q-1``."""
    if full is None:
        full = flux_density(dec, q, index_set=index_set, diagnostics=False)
    return {K: float(np.mean(np.abs(full.pi - truncated_density(dec, q, K, index_set).pi)))
            for K in range(1, q)}


# ---------------------------------------------------------------------------
# restriction, kernel bound, budget, pairing
# ---------------------------------------------------------------------------

def mask_to_grid(mask: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Upsample a cell mask ``(nt, c1, c2, c3)`` to the lattice by integer repetition."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 3:
        mask = np.broadcast_to(mask, (grid.nt,) + mask.shape)
    if mask.shape[0] != grid.nt:
        raise ConfigurationError("mask time axis does not match the field")
    out = mask
    for ax, n in enumerate(grid.spatial_shape):
        c = mask.shape[ax + 1]
        if n % c:
            raise ConfigurationError(f"mask resolution {mask.shape[1:]} does not divide the grid {grid.spatial_shape}")
        out = np.repeat(out, n // c, axis=ax + 1)
    return out


def restricted_flux(fluxes: dict, masks: dict) -> dict:
    """``{(p, q): <|pi_p| 1_{Omega_T \\ G_q}>}`` with the average over the whole of ``Omega_T``.

    ``fluxes`` maps p to :class:`FluxField`; ``masks`` maps q to a cell mask
    of ``G_q`` whose resolution divides the lattice.  The normalisation by the
    full space-time volume makes the value monotone under mask inclusion.
    """
    table = {}
    for qm, m in masks.items():
        for p, ff in fluxes.items():
            full = mask_to_grid(m, ff.grid)
            table[(p, qm)] = float(np.mean(np.abs(ff.pi) * (~full)))
    return table


def flux_kernel_bound(stats: ShellStats, mean_abs_pi: dict | None = None) -> dict:
    """``B_q = sum_p K_{q-p} lambda_p m_3(p)`` over resolved shells, and ``C = max_q <|pi_q|> / B_q``."""
    sel = stats.resolved & stats.active
    qs = stats.qs[sel]
    f = stats.flux_scale()[sel]
    bound = {}
    for q in stats.qs[stats.resolved]:
        bound[int(q)] = float(np.sum(localization_kernel(q - qs) * f)) if qs.size else 0.0
    C = None
    if mean_abs_pi:
        ratios = [v / bound[q] for q, v in mean_abs_pi.items() if bound.get(q, 0) > 0]
        C = float(max(ratios)) if ratios else 0.0
    return {"bound": bound, "C": C}


@dataclass(frozen=True)
class LocalizationKernel:
    """A-dimensional kernel ``K_j = 2^{2j/3}`` (j <= 0), ``2^{-4j/3}`` (j > 0)."""

    def __call__(self, j) -> np.ndarray:
        return localization_kernel(j)

    def summable_mass(self, jmin: int = -60, jmax: int = 60) -> float:
        j = np.arange(jmin, jmax + 1)
        return float(np.sum(self(j) ** (2.0 / 3.0)))

    def peak(self, jmin: int = -60, jmax: int = 60) -> int:
        j = np.arange(jmin, jmax + 1)
        return int(j[np.argmax(self(j))])


def budget_residual(dec: ShellDecomposition, q: int, forcing: np.ndarray | None = None) -> dict:
    """``r(t) = d/dt (1/2)||u~_{<q}||^2 - int (u (x) u) : grad u_{<q} - int f . u_{<q}`` at interior times.

    ``||u~_{<q}||^2 = <u, u_{<q}>`` (the square-root cutoff squared is the low
    symbol).  The time derivative is a centred difference.  The residual is a
    diagnostic: it vanishes only for discretised Euler solutions.
    """
    grid = dec.grid
    if grid.nt < 3:
        raise ConfigurationError("the budget needs at least 3 time samples")
    _check_q(dec, q)
    vol = grid.volume
    energy = np.empty(grid.nt)
    flux = np.empty(grid.nt)
    force = np.zeros(grid.nt)
    for t in range(grid.nt):
        u = dec.field.samples[t]
        lo = _shell_sum(dec, -1, q - 1, t)
        energy[t] = 0.5 * vol * float(np.mean(np.sum(u * lo, axis=-1)))
        flux[t] = vol * float(np.mean(_contract(u, u, _grad(lo, grid))))
        if forcing is not None:
            force[t] = vol * float(np.mean(np.sum(forcing[t] * lo, axis=-1)))
    dEdt = (energy[2:] - energy[:-2]) / (2.0 * grid.dt)
    r = dEdt - flux[1:-1] - force[1:-1]
    return {"residual": r, "dEdt": dEdt, "flux": flux[1:-1], "forcing": force[1:-1],
            "energy_scale": float(np.max(np.abs(energy)))}


def dr_pairing(fluxes: dict, phi, eps_bar: float | None = None) -> dict:
    """Pairings ``int int phi pi_q dx dt`` over q, their running Cesaro means and the uniform L1 ratio.

    ``phi`` is an array broadcastable to ``(nt, nx, ny, nz)`` or a callable
    ``phi(t, x, y, z)`` evaluated on the sample points.
    """
    qs = sorted(fluxes)
    if not qs:
        raise ConfigurationError("no fluxes given")
    grid = fluxes[qs[0]].grid
    if callable(phi):
        x, y, z = coordinates(grid)
        t = (np.arange(grid.nt) * grid.dt).reshape(-1, 1, 1, 1)
        phi = np.broadcast_to(phi(t, x[None], y[None], z[None]), grid.shape[:-1])
    scale = grid.T * grid.volume
    pair = np.array([scale * float(np.mean(phi * fluxes[q].pi)) for q in qs])
    ces = np.cumsum(pair) / np.arange(1, len(pair) + 1)
    l1 = {q: fluxes[q].mean_abs() for q in qs}
    c = None
    if eps_bar:
        c = max(l1.values()) / eps_bar
    return {"q": qs, "pairing": pair.tolist(), "cesaro": ces.tolist(), "mean_abs_pi": l1, "uniform_c": c}


# ---------------------------------------------------------------------------
# local regularity
# ---------------------------------------------------------------------------

def cell_bump_1d(n: int, cells: int, index: int, L: float = 1.0) -> np.ndarray:
    """Bump equal to 1 on cell ``index`` and supported in the cell dilated by 2 (periodic)."""
    h = L / cells
    x = np.arange(n) * (L / n)
    c = (index + 0.5) * h
    d = np.abs((x - c + 0.5 * L) % L - 0.5 * L)
    return chi(d / h)


@dataclass
class RegularityMap:
    """Per-cell local flux proxy and singular flags.

    ``proxy[t, c1, c2, c3] = max_q lambda_q (L^dim/|cell|) <|(u phi_cell)_q|^3>``
    over the shells ``qs``; a cell is singular when the proxy reaches
    ``theta * eps_bar``.
    """

    cells: tuple
    proxy: np.ndarray
    qs: tuple
    theta: float
    eps_bar: float

    def singular_at(self, theta: float) -> np.ndarray:
        return self.proxy >= theta * self.eps_bar

    @property
    def singular(self) -> np.ndarray:
        return self.singular_at(self.theta)

    @property
    def fraction(self) -> float:
        return float(np.mean(self.singular))

    def intersect(self, accumulant_mask: np.ndarray) -> np.ndarray:
        """``A cap S`` on the finer of the two cell grids (both must nest)."""
        s = self.singular
        a = np.asarray(accumulant_mask, dtype=bool)
        if a.ndim == 3:
            a = np.broadcast_to(a, s.shape[:1] + a.shape)
        target = tuple(max(x, y) for x, y in zip(s.shape[1:], a.shape[1:]))
        return _repeat_to(s, target) & _repeat_to(a, target)

    def as_dict(self) -> dict:
        return {"cells": list(self.cells), "theta": self.theta, "eps_bar": self.eps_bar,
                "window_qs": list(self.qs), "singular_fraction": self.fraction,
                "proxy_max": float(self.proxy.max()) if self.proxy.size else 0.0}


def _repeat_to(mask: np.ndarray, target) -> np.ndarray:
    out = mask
    for ax, (c, n) in enumerate(zip(mask.shape[1:], target)):
        if n % c:
            raise ConfigurationError("cell grids do not nest")
        out = np.repeat(out, n // c, axis=ax + 1)
    return out


def default_cells(grid: GridSpec) -> tuple:
    per = 4 if grid.spatial_dim == 3 else 8
    return tuple(per if ax < grid.spatial_dim else 1 for ax in range(3))


def regularity_map(dec: ShellDecomposition, eps_bar: float, window, cells=None,
                   theta: float = 0.1) -> RegularityMap:
    """Local Onsager regularity proxy on a coarse cell grid.

    ``window = (lo, hi)``: the proxy uses the upper half of the window, as the
    global ``eps``.  ``cells`` gives the cell count per axis (default 4 per
    axis in 3D, 8 in 2D); every cell must span at least 4 grid points.
    """
    grid = dec.grid
    dim = grid.spatial_dim
    if cells is None:
        cells = default_cells(grid)
    cells = tuple(int(c) for c in cells) + (1,) * (3 - len(cells))
    for ax in range(3):
        if ax >= dim and cells[ax] != 1:
            raise ConfigurationError("a 2D field has one cell along z")
        if ax < dim and grid.spatial_shape[ax] < 4 * cells[ax]:
            raise ConfigurationError("cells must span at least 4 grid points")
    lo, hi = window
    qs = tuple(q for q in range(lo + (hi - lo + 1) // 2, hi + 1) if q <= grid.q_max)
    if not qs:
        raise ConfigurationError("empty shell window for the regularity map")
    cut = build_cutoffs(grid)
    symbols = {q: cut.phi(q)[None, ..., None] for q in qs}
    cell_vol = grid.volume / float(np.prod(cells))
    bumps = [[cell_bump_1d(grid.spatial_shape[ax], cells[ax], i, grid.L) if ax < dim else np.ones(1)
              for i in range(cells[ax])] for ax in range(3)]
    proxy = np.zeros((grid.nt,) + cells)
    u = dec.field.samples
    for idx in np.ndindex(*cells):
        w = (bumps[0][idx[0]][:, None, None] * bumps[1][idx[1]][None, :, None]
             * bumps[2][idx[2]][None, None, :])
        vh = rfft_field(u * w[None, ..., None], grid)
        best = np.zeros(grid.nt)
        for q in qs:
            vq = irfft_field(vh * symbols[q], grid)
            m3 = np.mean(np.linalg.norm(vq, axis=-1) ** 3, axis=(1, 2, 3))
            best = np.maximum(best, float(grid.lam(q)) * (grid.volume / cell_vol) * m3)
        proxy[(slice(None),) + idx] = best
    return RegularityMap(cells=cells, proxy=proxy, qs=qs, theta=float(theta), eps_bar=float(eps_bar))


__all__ = [
    "FluxField", "flux_density", "route_defect", "antisymmetry_defect", "summand_set",
    "truncated_density", "localization_table", "mask_to_grid", "restricted_flux",
    "flux_kernel_bound", "LocalizationKernel", "budget_residual", "dr_pairing",
    "cell_bump_1d", "RegularityMap", "default_cells", "regularity_map",
]
