"""Corpus generators, their side conditions and the manifest."""

import json

import numpy as np
import pytest

from intermit.corpus import (CORPUS, corpus_manifest, gen_frequency_cubes, gen_point_singularity_2d,
                             gen_point_singularity_3d, gen_shear_stack, gen_single_mode, gen_vortex_sheet,
                             ode_residual, psi_flux, synthesize)
from intermit.grid import ConfigurationError, GridSpec, to_spectral
from intermit.lp import decompose
from intermit.stats import fit_slope, shell_moments


def test_psi_flux_oracles():
    assert abs(psi_flux(np.cos)) <= 1e-12
    # Psi' = cos + cos(2.)/2: only the 3 a^2 b cross term survives, 3/2 * pi/2
    assert psi_flux(lambda t: np.sin(t) + 0.25 * np.sin(2 * t)) == pytest.approx(3 * np.pi / 4, rel=1e-12)


def test_ode_residual():
    c = 0.7
    assert ode_residual(lambda t: c + 0 * t, 4 * c ** 2) <= 1e-12
    assert ode_residual(np.cos, 0.0) > 1.0
    with pytest.raises(ConfigurationError):
        ode_residual(lambda t: t, 0.0)
    with pytest.raises(ConfigurationError):
        psi_flux(lambda t: t)


def test_generators_are_real_and_flagged():
    fields = [
        gen_vortex_sheet(GridSpec.cube(32)),
        gen_shear_stack(GridSpec.cube(64, 2)),
        gen_point_singularity_2d(GridSpec.cube(64, 2)),
        gen_point_singularity_3d(GridSpec.cube(32)),
        gen_frequency_cubes(GridSpec.cube(64)),
        gen_single_mode(GridSpec.cube(32), q0=1),
    ]
    for u in fields:
        assert np.all(np.isfinite(u.samples))
        c = to_spectral(u).coefficients
        flipped = np.conj(np.roll(np.flip(c, axis=(1, 2, 3)), 1, axis=(1, 2, 3)))
        if u.grid.spatial_dim == 2:
            flipped = np.conj(np.roll(np.flip(c, axis=(1, 2)), 1, axis=(1, 2)))
        assert np.max(np.abs(c - flipped)) <= 1e-12 * np.max(np.abs(c))
    # divergence-free flags are set only where exact (construction re-checks them)
    assert [u.divergence_free for u in fields] == [True, True, True, False, False, True]


def test_sheet_profile():
    u = gen_vortex_sheet(GridSpec.cube(64))
    prof = u.samples[0, 0, 0, :, 0]
    assert np.all(u.samples[..., 1:] == 0)
    assert np.mean(prof[1:31]) == pytest.approx(1.0, abs=0.05)
    assert np.mean(prof[33:63]) == pytest.approx(0.0, abs=0.05)


def test_generator_errors():
    with pytest.raises(ConfigurationError):
        gen_vortex_sheet(GridSpec.cube(32, 2))
    with pytest.raises(ConfigurationError):
        gen_shear_stack(GridSpec.cube(32, 2), s=2.0)
    with pytest.raises(ConfigurationError):
        gen_shear_stack(GridSpec.cube(32, 2), q_range=(0, 9))
    with pytest.raises(ConfigurationError):
        gen_single_mode(GridSpec.cube(32), q0=7)
    with pytest.raises(ConfigurationError):
        gen_frequency_cubes(GridSpec.cube(32), q_range=(1, 5))
    with pytest.raises(ConfigurationError):
        gen_point_singularity_2d(GridSpec.cube(32, 2), method="other")
    with pytest.raises(ConfigurationError):
        synthesize("nope")


def test_single_mode_one_active_shell(single):
    assert list(single.stats.qs[single.stats.active]) == [2]
    assert single.V[single.stats.index(2)] / single.grid.volume == pytest.approx(9 * np.pi ** 2 / 128, abs=1e-4)


def test_shear_stack_volumes(shear):
    ratio = shear.V[shear.stats.active & (shear.stats.qs >= 0)] / shear.grid.volume
    assert np.all((ratio >= 0.3) & (ratio <= 1.0))


def test_ps3_scalings(ps3):
    for p in (2, 3):
        assert ps3.slope(ps3.stats.m(p)) == pytest.approx(-(3 - 2 * p / 3), abs=0.2)
    assert ps3.slope(ps3.V) == pytest.approx(-3.0, abs=0.3)
    assert ps3.dims.d == pytest.approx(0.0, abs=0.4)


def test_cube_origin_peak(cubes):
    assert cubes.slope(cubes.stats.origin) == pytest.approx(2 / 3, abs=0.15)
    # the origin is where every shell peaks
    act = cubes.stats.active & (cubes.stats.qs >= 1)
    assert np.allclose(cubes.stats.origin[act], cubes.stats.peak[act], rtol=1e-12)


def _slopes(u, lo, hi):
    st = shell_moments(decompose(u))
    sel = (st.qs >= lo) & (st.qs <= hi)
    return np.array([fit_slope(st.qs[sel], np.log2(st.m(p)[sel]))[0] for p in (2, 3)])


def test_truncation_stability():
    """Halving the truncation length (doubling n) moves the fitted slopes by <= 0.05."""
    a = _slopes(gen_point_singularity_2d(GridSpec.cube(128, 2)), 2, 4)
    b = _slopes(gen_point_singularity_2d(GridSpec.cube(256, 2)), 2, 4)
    assert np.max(np.abs(a - b)) <= 0.05
    a = _slopes(gen_point_singularity_3d(GridSpec.cube(32)), 1, 3)
    b = _slopes(gen_point_singularity_3d(GridSpec.cube(64)), 1, 3)
    assert np.max(np.abs(a - b)) <= 0.05


def test_sampled_construction_available():
    u = gen_point_singularity_2d(GridSpec.cube(64, 2), method="sampled")
    assert "radius clamp" in u.metadata and np.all(np.isfinite(u.samples))
    v = gen_point_singularity_3d(GridSpec.cube(32), method="sampled", reg_radius=0.01)
    assert "r0=0.01" in v.metadata


def test_manifest():
    m = json.loads(corpus_manifest())
    assert m["schema"] == "corpus/1"
    names = [e["name"] for e in m["entries"]]
    assert names == list(CORPUS)
    for e in m["entries"]:
        assert e["expected"], e["name"]
        for x in e["expected"]:
            assert x["basis"] in ("analytic", "derived")


def test_synthesize_defaults():
    u = synthesize("single-mode", 32, A=2.0)
    assert u.grid.nx == 32 and np.max(np.abs(u.samples)) == pytest.approx(2.0)
    assert synthesize("shear-stack", 64).grid.spatial_dim == 2
