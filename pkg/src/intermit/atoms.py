"""Atomic decomposition on dyadic cubes and thresholded active regions.

For a shell ``u_q`` and a dyadic cube ``Q_{qk}`` of side ``ell_q`` the atom
envelope is ``b_{qk} = u_q (1_{Q_{qk}} * eta_q)`` where ``eta_q`` is the radial
bump of radius ``ell_q`` normalised to unit mass.  The coefficient

    s_{qk} = max_{|beta| <= M} lambda_q^{-|beta|} ||d^beta b_{qk}||_inf

is evaluated on grid samples.  The weight ``w = 1_Q * eta_q`` is supported in
the 27-cube dilation ``Q*_{qk}``; the weight of the cube at the origin is
tabulated once on the periodic grid and shared by all cubes, so the sup-norms
are computed block-wise over the ``3^dim`` neighbouring blocks of every cube.

Active regions are the unions of dilated cubes whose coefficient exceeds
``sigma_q <|u_q|^3> / <|u_q|^2>``; masks live on the cube lattice of the shell
(``2^q`` cells per axis) for every time sample.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import ConfigurationError, GridSpec, half_wavenumbers, irfft_field, rfft_field
from .lp import chi
from .stats import ShellStats, fit_slope

__all__ = [
    "ThresholdSchedule",
    "default_schedule",
    "AtomSet",
    "atomic_decompose",
    "atom_norm_ratio",
    "ActiveRegion",
    "active_region",
    "verify_active_bounds",
    "accumulant",
    "Accumulant",
    "box_dimension",
    "upsample_mask",
    "dilate_periodic",
]


# ---------------------------------------------------------------------------
# threshold schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSchedule:
    """Positive decreasing thresholds ``sigma_q`` of zero exponential type."""

    kind: str = "harmonic"
    scale: float = 1.0

    def __call__(self, q) -> float:
        q = float(q)
        if self.kind == "harmonic":
            return self.scale / (q + 2.0)
        if self.kind == "log":
            return self.scale / np.log2(q + 4.0)
        if self.kind == "constant":
            return self.scale
        raise ConfigurationError(f"unknown schedule {self.kind!r}")

    def values(self, qs) -> np.ndarray:
        return np.array([self(q) for q in qs])

    def check(self, q_max: int) -> dict:
        qs = np.arange(0, max(q_max, 8) + 1)
        v = self.values(qs)
        decreasing = bool(np.all(np.diff(v) < 0)) if self.kind != "constant" else False
        ratio = np.abs(np.log2(v[qs >= 1])) / qs[qs >= 1]
        # zero exponential type on a finite range: |log2 sigma_q|/q decreases towards 0
        type_ok = bool(np.all(np.diff(ratio[2:]) <= 1e-15))
        first_half = next((int(q) for q, r in zip(qs[qs >= 1], ratio) if r <= 0.5
                           and np.all(ratio[int(q) - 1:] <= 0.5)), None)
        return {"positive": bool(np.all(v > 0)), "decreasing": decreasing, "zero_exponential_type": type_ok,
                "log_ratio_at_4": float(ratio[3]), "log_ratio_below_half_from": first_half}


def default_schedule(q_max: int) -> ThresholdSchedule:
    """``sigma_q = 1 / (q + 2)``."""
    if q_max < 2:
        raise ConfigurationError("need q_max >= 2")
    return ThresholdSchedule("harmonic")


# ---------------------------------------------------------------------------
# atom coefficients
# ---------------------------------------------------------------------------

def _cells_per_axis(grid: GridSpec, q: int) -> tuple:
    c = 2 ** q
    dim = grid.spatial_dim
    out = tuple(c if ax < dim else 1 for ax in range(3))
    for n, ci in zip(grid.spatial_shape, out):
        if n % ci or n // ci < 1:
            raise ConfigurationError(f"shell {q} cubes do not tile the grid")
    return out


def _periodic_weight(grid: GridSpec, q: int, M: int) -> tuple:
    """Mollified indicator of the cube at the origin, periodised on the torus.

    Returns ``(w, dw, d2w, m, cells)``: ``w`` has the spatial shape, ``dw``
    stacks its first derivatives and ``d2w`` its second derivatives (None for
    ``M = 1``); ``m`` is the number of grid points per cube side and ``cells``
    the number of cubes per axis.  The weight of cube ``k`` is ``w`` rolled by
    ``k m``; it vanishes outside the 3^dim neighbouring cubes.
    """
    dim = grid.spatial_dim
    cells = _cells_per_axis(grid, q)
    shape = grid.spatial_shape
    m = [n // c for n, c in zip(shape, cells)]
    ell = float(grid.ell(q))
    ind = np.zeros(shape)
    ind[tuple(slice(0, m[ax]) if ax < dim else slice(None) for ax in range(3))] = 1.0
    x, y, z = (c for c in _centered_coords(grid))
    r = np.sqrt(sum(c ** 2 for c in (x, y, z)[:dim]))
    eta = chi(r / ell)
    eta = eta / eta.sum()
    w_h = rfft_field(ind[None, ..., None], grid) * rfft_field(eta[None, ..., None], grid) * float(np.prod(grid.n_active))
    ks = half_wavenumbers(grid)
    w = irfft_field(w_h, grid)[0, ..., 0]
    dw = np.stack([irfft_field(w_h * (2j * np.pi * ks[j])[None, ..., None], grid)[0, ..., 0] for j in range(dim)])
    d2w = None
    if M == 2:
        d2w = np.stack([
            np.stack([irfft_field(w_h * ((2j * np.pi * ks[i]) * (2j * np.pi * ks[j]))[None, ..., None], grid)[0, ..., 0]
                      for j in range(dim)])
            for i in range(dim)
        ])
    return w, dw, d2w, m, cells


def _centered_coords(grid: GridSpec):
    out = []
    for ax, n in enumerate(grid.spatial_shape):
        j = np.arange(n)
        j = np.where(j >= n // 2, j - n, j)
        shape = [1, 1, 1]
        shape[ax] = n
        out.append((j * (grid.L / n)).reshape(shape))
    return out


def _blocks(a: np.ndarray, cells, m) -> np.ndarray:
    """Reshape ``(nx, ny, nz, ...)`` into ``(c1, c2, c3, m1, m2, m3, ...)``."""
    rest = a.shape[3:]
    b = a.reshape(cells[0], m[0], cells[1], m[1], cells[2], m[2], *rest)
    return b.transpose(0, 2, 4, 1, 3, 5, *range(6, 6 + len(rest)))


@dataclass
class AtomSet:
    """Atom coefficients ``s[t, k1, k2, k3]`` for one shell."""

    q: int
    M: int
    s: np.ndarray
    grid: GridSpec
    mollifier: str = "radial chi bump, radius ell_q, unit mass"

    @property
    def cells(self) -> tuple:
        return self.s.shape[1:]


def atomic_decompose(u_q: np.ndarray, q: int, grid: GridSpec, M: int = 1) -> AtomSet:
    """Atom coefficients of a single shell for every time sample.

    ``u_q`` has the sample layout ``(nt, nx, ny, nz, d)``.  Derivatives of the
    shell are spectral; derivatives of the window weight are spectral on the
    window; products and sup-norms are taken on grid samples.
    """
    if M not in (1, 2):
        raise ConfigurationError("atom order M must be 1 or 2")
    if q < 0:
        raise ConfigurationError("atoms are defined for q >= 0")
    dim = grid.spatial_dim
    w, dw, d2w, m, cells = _periodic_weight(grid, q, M)
    lam_inv = float(grid.ell(q))
    offsets = list(itertools.product(*[(-1, 0, 1) if ax < dim else (0,) for ax in range(3)]))
    # distinct neighbouring blocks (offsets coincide modulo the cube count when it is < 3)
    groups = sorted({tuple(oi % c for oi, c in zip(o, cells)) for o in offsets})

    def window_part(arr, key):
        sl = tuple(slice(key[ax] * m[ax], (key[ax] + 1) * m[ax]) for ax in range(3))
        return arr[(Ellipsis,) + sl]

    ks = half_wavenumbers(grid)
    nt = u_q.shape[0]
    out = np.zeros((nt,) + tuple(cells))
    for t in range(nt):
        u = u_q[t]
        uh = rfft_field(u[None], grid)
        du = [irfft_field(uh * (2j * np.pi * ks[j])[None, ..., None], grid)[0] for j in range(dim)]
        d2u = None
        if M == 2:
            d2u = [[irfft_field(uh * ((2j * np.pi * ks[i]) * (2j * np.pi * ks[j]))[None, ..., None], grid)[0]
                    for j in range(dim)] for i in range(dim)]
        if M == 1:
            # scalar expansion |d_j(u W)|^2 = A_j W^2 + 2 B_j W dW_j + C dW_j^2
            C = _blocks(np.einsum("...i,...i->...", u, u), cells, m)
            A = [_blocks(np.einsum("...i,...i->...", a, a), cells, m) for a in du]
            B = [_blocks(np.einsum("...i,...i->...", u, a), cells, m) for a in du]
            best2 = np.zeros(cells)
            for key in groups:
                Wt = window_part(w, key)
                W2 = Wt * Wt
                vals2 = (C * W2).max(axis=(3, 4, 5))
                for j in range(dim):
                    dWt = window_part(dw[j], key)
                    g2 = A[j] * W2 + 2.0 * B[j] * (Wt * dWt) + C * (dWt * dWt)
                    vals2 = np.maximum(vals2, g2.max(axis=(3, 4, 5)) * lam_inv ** 2)
                best2 = np.maximum(best2, np.roll(vals2, shift=tuple(-k for k in key), axis=(0, 1, 2)))
            out[t] = np.sqrt(np.maximum(best2, 0.0))
            continue
        ub = _blocks(u, cells, m)
        dub = [_blocks(a, cells, m) for a in du]
        d2ub = [[_blocks(a, cells, m) for a in row] for row in d2u] if M == 2 else None
        best = np.zeros(cells)
        for key in groups:
            Wt = window_part(w, key)
            dWt = [window_part(dw[j], key) for j in range(dim)]
            mag = np.sqrt(np.sum(ub ** 2, axis=-1)) * np.abs(Wt)
            vals = mag.max(axis=(3, 4, 5))
            for j in range(dim):
                g = dub[j] * Wt[..., None] + ub * dWt[j][..., None]
                vj = np.sqrt(np.sum(g ** 2, axis=-1)).max(axis=(3, 4, 5)) * lam_inv
                vals = np.maximum(vals, vj)
            if M == 2:
                d2Wt = [[window_part(d2w[i, j], key) for j in range(dim)] for i in range(dim)]
                for i in range(dim):
                    for j in range(dim):
                        g = (d2ub[i][j] * Wt[..., None] + dub[i] * dWt[j][..., None]
                             + dub[j] * dWt[i][..., None] + ub * d2Wt[i][j][..., None])
                        vij = np.sqrt(np.sum(g ** 2, axis=-1)).max(axis=(3, 4, 5)) * lam_inv ** 2
                        vals = np.maximum(vals, vij)
            # block at index j contributes to the cube k = j - offset
            best = np.maximum(best, np.roll(vals, shift=tuple(-k for k in key), axis=(0, 1, 2)))
        out[t] = best
    return AtomSet(q=q, M=M, s=out, grid=grid)


def atom_norm_ratio(atoms: AtomSet, u_q: np.ndarray, r: float) -> float | None:
    """``(lambda_q^{-dim} sum_k s_k^r)^{1/r} / ||u_q||_r`` with both sides as space-time averages.

    The left side uses the volume-normalised cube sum ``2^{-q dim} sum_k s^r``
    (cube volume over box volume), matching the normalised lattice norm.
    """
    mag = np.sqrt(np.sum(np.asarray(u_q) ** 2, axis=-1))
    nr = float(np.mean(mag ** r)) ** (1.0 / r)
    if nr == 0.0:
        return None
    ncell = int(np.prod(atoms.cells))
    lhs = float(np.mean(np.sum(atoms.s.reshape(atoms.s.shape[0], -1) ** r, axis=1) / ncell)) ** (1.0 / r)
    return lhs / nr


# ---------------------------------------------------------------------------
# active regions
# ---------------------------------------------------------------------------

def dilate_periodic(active: np.ndarray, spatial_dim: int) -> np.ndarray:
    """Union of the ``3^dim`` periodic shifts of a cube mask ``(nt, c1, c2, c3)``."""
    out = np.zeros_like(active, dtype=bool)
    rng = [(-1, 0, 1) if ax < spatial_dim else (0,) for ax in range(3)]
    for o in itertools.product(*rng):
        out |= np.roll(active, shift=o, axis=(1, 2, 3))
    return out


def upsample_mask(mask: np.ndarray, target_cells) -> np.ndarray:
    """Repeat a cube mask ``(nt, c1, c2, c3)`` onto a finer cube lattice."""
    out = mask
    for ax, tc in enumerate(target_cells):
        c = out.shape[ax + 1]
        if tc % c:
            raise ConfigurationError("mask resolution mismatch")
        if tc != c:
            out = np.repeat(out, tc // c, axis=ax + 1)
    return out


@dataclass
class ActiveRegion:
    """Active region of one shell on its cube lattice."""

    q: int
    sigma: float
    threshold: float
    active_cubes: np.ndarray
    mask: np.ndarray
    grid: GridSpec

    @property
    def N(self) -> np.ndarray:
        """Super-threshold cube count per time sample."""
        return self.active_cubes.reshape(self.active_cubes.shape[0], -1).sum(axis=1)

    @property
    def N_mean(self) -> float:
        return float(np.mean(self.N))

    @property
    def cell_volume(self) -> float:
        return float(self.grid.ell(self.q)) ** self.grid.spatial_dim

    @property
    def measure(self) -> float:
        """|A_q| = sum_t |A_q(t)| dt."""
        per_t = self.mask.reshape(self.mask.shape[0], -1).sum(axis=1) * self.cell_volume
        return float(np.sum(per_t) * self.grid.dt)

    @property
    def fraction(self) -> float:
        return float(np.mean(self.mask))

    def sandwich(self) -> dict:
        """Lower/upper bounds ``lambda^{-dim} int N dt <= |A_q| <= 3^dim lambda^{-dim} int N dt``."""
        base = float(np.sum(self.N) * self.grid.dt * self.cell_volume)
        factor = 3 ** self.grid.spatial_dim
        return {"lower": base, "measure": self.measure, "upper": factor * base,
                "ok": bool(base <= self.measure * 1.01 + 1e-300 and self.measure <= 1.01 * factor * base)}


def active_region(atoms: AtomSet, stats: ShellStats, sigma, grid: GridSpec | None = None,
                  threshold_speed: float | None = None) -> ActiveRegion:
    """Mark the dilated cubes whose coefficient exceeds ``sigma_q m_3/m_2``.

    ``sigma`` is a schedule (callable) or a number.  ``threshold_speed``
    overrides ``m_3/m_2`` (used for the multifractal thresholds).
    """
    grid = grid or atoms.grid
    q = atoms.q
    i = stats.index(q)
    sig = float(sigma(q)) if callable(sigma) else float(sigma)
    if not stats.active[i]:
        empty = np.zeros_like(atoms.s, dtype=bool)
        return ActiveRegion(q, sig, float("inf"), empty, empty.copy(), grid)
    speed = threshold_speed if threshold_speed is not None else float(stats.m(3)[i] / stats.m(2)[i])
    thr = sig * speed
    act = atoms.s > thr
    return ActiveRegion(q, sig, thr, act, dilate_periodic(act, grid.spatial_dim), grid)


def verify_active_bounds(region: ActiveRegion, stats: ShellStats, u_q: np.ndarray, V_q: float) -> dict:
    """Measured constants of the active-region estimates for one shell.

    * ``bound_c``: ``|A_q| / (sigma_q^{-3} V_q T)``
    * ``concentration_c``: ``(1 - int_{A_q}|u_q|^3 / int |u_q|^3) / sigma_q``
    * ``count_c``: ``N_mean / (sigma_q^{-3} (L lambda_q)^{d_q})``
    """
    g = region.grid
    sig = region.sigma
    mag3 = np.sum(u_q ** 2, axis=-1) ** 1.5
    total = float(np.sum(mag3))
    out = {"q": region.q, "sigma": sig, "threshold": region.threshold, "Nq_mean": region.N_mean,
           "measure": region.measure, "fraction": region.fraction}
    if total == 0.0 or not np.isfinite(V_q):
        out.update({"bound_c": 0.0, "concentration": 1.0, "concentration_c": 0.0, "count_c": 0.0})
        return out
    fine = upsample_mask(region.mask, g.spatial_shape)
    inside = float(np.sum(mag3[fine]))
    conc = inside / total
    out["bound_c"] = region.measure / (sig ** -3 * V_q * g.T)
    out["concentration"] = conc
    out["concentration_c"] = max(0.0, 1.0 - conc) / sig
    q = region.q
    if q >= 1:
        dq = g.spatial_dim - np.log2(g.volume / V_q) / q
        out["count_c"] = region.N_mean / (sig ** -3 * (g.L * float(g.lam(q))) ** dq)
    else:
        out["count_c"] = region.N_mean / sig ** -3
    out["sandwich"] = region.sandwich()
    return out


@dataclass
class Accumulant:
    """Unions ``G_p = U_{k > p} A_k`` rasterised on the finest cube lattice."""

    qs: list
    masks: dict
    cells: tuple
    proxy_p: int | None

    @property
    def proxy(self) -> np.ndarray | None:
        return None if self.proxy_p is None else self.masks[self.proxy_p]

    def fraction(self, p: int) -> float:
        return float(np.mean(self.masks[p]))

    def nested(self) -> bool:
        ps = sorted(self.masks)
        return all(not np.any(self.masks[b] & ~self.masks[a]) for a, b in zip(ps, ps[1:]))


def accumulant(regions: dict, p_list=None) -> Accumulant:
    """Build ``G_p`` for every ``p`` with at least one shell above it.

    The A-proxy is ``G_p`` at the largest ``p`` that still has two shells above it.
    """
    qs = sorted(regions)
    if not qs:
        raise ConfigurationError("no regions")
    finest = regions[qs[-1]].mask.shape[1:]
    up = {q: upsample_mask(regions[q].mask, finest) for q in qs}
    masks = {}
    acc = np.zeros_like(up[qs[-1]], dtype=bool)
    for p in range(qs[-1] - 1, qs[0] - 2, -1):
        if p + 1 in up:
            acc = acc | up[p + 1]
        masks[p] = acc.copy()
    if p_list is not None:
        masks = {p: masks[p] for p in p_list if p in masks}
    cand = [p for p in masks if sum(1 for q in qs if q > p) >= 2]
    proxy_p = max(cand) if cand else None
    return Accumulant(qs=qs, masks=masks, cells=tuple(finest), proxy_p=proxy_p)


def box_dimension(regions: dict, window) -> dict:
    """Least-squares slope of ``log2(mean_t N_q)`` against q over the window."""
    lo, hi = window
    qs = [q for q in sorted(regions) if lo <= q <= hi and regions[q].N_mean > 0]
    if len(qs) < 3:
        raise ConfigurationError("box dimension needs >= 3 shells with active cubes")
    y = [np.log2(regions[q].N_mean) for q in qs]
    slope, resid = fit_slope(qs, y)
    return {"estimate": slope, "residual": resid, "window": [lo, hi], "shells": qs}
