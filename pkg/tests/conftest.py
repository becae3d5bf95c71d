"""Shared, session-scoped corpus fields and their (lazily computed) analyses.

The heavy objects (128^3 decompositions, atoms, regularity maps) are built
once per session and reused by the module tests and the acceptance run.
"""

from __future__ import annotations

import functools

import numpy as np
import pytest

from intermit.atoms import accumulant, active_region, atomic_decompose, default_schedule
from intermit.corpus import (gen_frequency_cubes, gen_point_singularity_2d, gen_point_singularity_3d,
                             gen_shear_stack, gen_single_mode, gen_vortex_sheet)
from intermit.flux import flux_density, regularity_map
from intermit.grid import ConfigurationError, GridSpec
from intermit.lp import decompose
from intermit.structure import default_separations, structure_function
from intermit.stats import active_volume, default_window, dimension_summary, onsager_epsilons, shell_moments


class Analysis:
    """A corpus field with cached decomposition, statistics and regions."""

    def __init__(self, name: str, field):
        self.name = name
        self.field = field
        self.grid = field.grid

    @functools.cached_property
    def dec(self):
        return decompose(self.field)

    @functools.cached_property
    def stats(self):
        return shell_moments(self.dec, ps=(2, 3, 4))

    @functools.cached_property
    def V(self):
        return active_volume(self.stats)

    @property
    def window(self):
        return default_window(self.grid.q_max)

    @functools.cached_property
    def dims(self):
        try:
            return dimension_summary(self.V, self.stats.qs, self.grid.spatial_dim, self.grid.L, window=self.window)
        except ConfigurationError:
            return None

    @functools.cached_property
    def eps(self):
        return onsager_epsilons(self.stats, self.window)

    @functools.cached_property
    def schedule(self):
        return default_schedule(self.grid.q_max)

    @functools.cached_property
    def atoms(self):
        out = {}
        for q in range(0, self.grid.q_max + 1):
            if self.stats.active[self.stats.index(q)]:
                out[q] = atomic_decompose(self.dec.shells[q], q, self.grid)
        return out

    @functools.cached_property
    def regions(self):
        return {q: active_region(a, self.stats, self.schedule) for q, a in self.atoms.items()}

    @functools.cached_property
    def accumulant(self):
        return accumulant(self.regions)

    def flux(self, q):
        """Cached flux density through shell q (with route diagnostics)."""
        cache = self.__dict__.setdefault("_flux", {})
        if q not in cache:
            cache[q] = flux_density(self.dec, q)
        return cache[q]

    def regularity(self, cells):
        cache = self.__dict__.setdefault("_reg", {})
        cells = tuple(cells)
        if cells not in cache:
            cache[cells] = regularity_map(self.dec, self.eps.eps_bar, self.window, cells=cells)
        return cache[cells]

    @functools.cached_property
    def s2curve(self):
        """S_2 and S_3 on the default separations (32 directions)."""
        return structure_function(self.field, default_separations(self.grid), ps=(2, 3), n_theta=32)

    def slope(self, values, window=None):
        """Least-squares slope of log2(values) against q over the window (active shells)."""
        from intermit.stats import fit_slope
        lo, hi = window or self.window
        st = self.stats
        sel = (st.qs >= lo) & (st.qs <= hi) & st.active
        return fit_slope(st.qs[sel].astype(float), np.log2(np.asarray(values)[sel]))[0]


_FACTORIES = {
    "vortex-sheet": lambda: gen_vortex_sheet(GridSpec.cube(128)),
    "shear-stack": lambda: gen_shear_stack(GridSpec.cube(512, 2)),
    "point-singularity-2d": lambda: gen_point_singularity_2d(GridSpec.cube(512, 2)),
    "point-singularity-3d": lambda: gen_point_singularity_3d(GridSpec.cube(128)),
    "frequency-cubes": lambda: gen_frequency_cubes(GridSpec.cube(128)),
    "single-mode": lambda: gen_single_mode(GridSpec.cube(64), q0=2, A=1.0),
}

CORPUS_NAMES = list(_FACTORIES)


@pytest.fixture(scope="session")
def corpus():
    """Mapping name -> lazily built :class:`Analysis`."""
    cache = {}

    class _Lazy(dict):
        def __missing__(self, key):
            if key not in _FACTORIES:
                raise KeyError(key)
            cache[key] = Analysis(key, _FACTORIES[key]())
            self[key] = cache[key]
            return cache[key]

    return _Lazy()


@pytest.fixture(scope="session")
def sheet(corpus):
    return corpus["vortex-sheet"]


@pytest.fixture(scope="session")
def shear(corpus):
    return corpus["shear-stack"]


@pytest.fixture(scope="session")
def ps2(corpus):
    return corpus["point-singularity-2d"]


@pytest.fixture(scope="session")
def ps3(corpus):
    return corpus["point-singularity-3d"]


@pytest.fixture(scope="session")
def cubes(corpus):
    return corpus["frequency-cubes"]


@pytest.fixture(scope="session")
def single(corpus):
    return corpus["single-mode"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_solenoidal(grid: GridSpec, rng, kmax: float = 6.0, nt: int | None = None) -> np.ndarray:
    """Random real band-limited divergence-free samples (Leray projection of noise)."""
    from intermit.grid import half_wavenumbers, irfft_field, rfft_field
    if nt is not None:
        grid = grid.with_time(nt, grid.T)
    dim = grid.spatial_dim
    uh = rfft_field(rng.standard_normal(grid.shape), grid)
    spatial = uh.shape[1:-1]
    ks = [np.broadcast_to(k * grid.L, spatial) for k in half_wavenumbers(grid)[:dim]]
    k2 = sum(k ** 2 for k in ks)
    uh = uh * (k2 <= kmax ** 2)[None, ..., None]
    div = sum(ks[j][None] * uh[..., j] for j in range(dim))
    safe = np.where(k2 > 0, k2, 1.0)[None]
    for j in range(dim):
        uh[..., j] -= ks[j][None] * div / safe
    return irfft_field(uh, grid)
