"""Dyadic cutoffs and shell projections."""

import numpy as np
import pytest

from intermit.corpus import gen_single_mode
from intermit.grid import ConfigurationError, GridSpec, VelocityField, rfft_field
from intermit.lp import (bernstein_ratio, build_cutoffs, chi, decompose, gradient_ratio, h_norm_ratios,
                         low_pass, phi_profile, shell_project, smooth_step, sqrt_low_pass)


def test_chi_profile():
    t = np.linspace(0, 1.5, 3001)
    c = chi(t)
    assert np.all(c[t <= 0.5] == 1.0) and np.all(c[t >= 1.0] == 0.0)
    assert np.all(np.diff(c) <= 0)
    assert smooth_step(0.5) == pytest.approx(0.5)


@pytest.mark.parametrize("grid", [GridSpec.cube(32), GridSpec.cube(64, 2), GridSpec(32, 16, 64)])
def test_partition_of_unity(grid):
    assert build_cutoffs(grid).partition_defect() <= 1e-12


def test_cutoff_exact_values():
    xi = np.array([0.0, 0.25, 0.5])
    assert np.all(phi_profile(-1, xi) == 1.0)
    for q in range(1, 6):
        assert np.all(phi_profile(q, xi) == 0.0)
    for q in range(0, 6):
        at = np.array([2.0 ** q])
        assert phi_profile(q, at)[0] == 1.0
        assert phi_profile(q + 1, at)[0] == 0.0
        if q >= 1:
            assert phi_profile(q - 1, at)[0] == 0.0


def test_disjointness():
    cut = build_cutoffs(GridSpec.cube(64))
    for q in range(-1, cut.q_top + 1):
        for p in range(q + 2, cut.q_top + 1):
            assert np.max(cut.phi(q) * cut.phi(p)) == 0.0


def test_small_grid_rejected():
    with pytest.raises(ConfigurationError):
        build_cutoffs(GridSpec.cube(8))


@pytest.mark.parametrize("q0", [0, 2, 3])
def test_single_mode_one_shell(q0):
    g = GridSpec.cube(32)
    u = gen_single_mode(g, q0=q0)
    dec = decompose(u)
    scale = np.max(np.abs(u.samples))
    for q, s in dec.shells.items():
        if q == q0:
            assert np.max(np.abs(s - u.samples)) <= 1e-13 * scale
        else:
            assert np.max(np.abs(s)) <= 1e-13 * scale


def test_low_pass_identity_above_q_top(rng):
    g = GridSpec.cube(16)
    u = VelocityField(g, rng.standard_normal(g.shape))
    out = low_pass(u, g.q_top + 2)
    assert np.max(np.abs(out.samples - u.samples)) <= 1e-12


def test_sqrt_low_pass_parseval(rng):
    g = GridSpec.cube(32, 2)
    u = VelocityField(g, rng.standard_normal(g.shape))
    cut = build_cutoffs(g)
    for q in (1, 2, 3):
        lhs = float(np.mean(np.sum(sqrt_low_pass(u, q).samples ** 2, axis=-1)))
        uh = np.abs(np.fft.fftn(u.samples[0, :, :, 0], axes=(0, 1), norm="forward")) ** 2
        xi = np.sqrt(np.fft.fftfreq(32, 1 / 32)[:, None] ** 2 + np.fft.fftfreq(32, 1 / 32)[None, :] ** 2)
        rhs = float(np.sum(chi(xi / 2 ** q)[..., None] * uh))
        assert lhs == pytest.approx(rhs, rel=1e-10)
        assert cut.sqrt_chi_low(q) ** 2 == pytest.approx(cut.chi_low(q))


def test_projection_errors(rng):
    g = GridSpec.cube(16)
    u = VelocityField(g, rng.standard_normal(g.shape))
    with pytest.raises(ConfigurationError):
        shell_project(u, -2)
    with pytest.raises(ConfigurationError):
        shell_project(u, g.q_top + 1)
    with pytest.raises(ConfigurationError):
        low_pass(u, 0)


def test_decomposition_invariants(rng):
    g = GridSpec.cube(32, nt=2)
    u = VelocityField(g, rng.standard_normal(g.shape))
    dec = decompose(u)
    assert dec.reconstruction_error() <= 1e-10
    assert dec.mean_mode_spread() <= 1e-14
    # spectral support of each resolved shell lies in (lambda_q/2, 2 lambda_q)
    cut = dec.cutoffs
    for q in range(0, dec.q_max + 1):
        sh = np.abs(rfft_field(dec.shells[q], g)).max(axis=(0, -1))
        xi = cut.xi
        outside = (xi <= 2.0 ** (q - 1)) | (xi >= 2.0 ** (q + 1))
        assert np.max(sh[outside]) <= 1e-14
    # the low-pass routes agree
    for q in (1, 2, 3):
        assert np.max(np.abs(dec.low(q) - dec.low_spectral(q))) <= 1e-12
        assert np.max(np.abs(dec.low(q) - low_pass(u, q).samples)) <= 1e-12


def test_sheet_moment_slopes(sheet):
    for p in (2, 3):
        assert sheet.slope(sheet.stats.m(p)) == pytest.approx(-1.0, abs=0.1)


def test_cube_norm_slopes(cubes):
    assert cubes.slope(cubes.stats.norm(3)) == pytest.approx(-1 / 3, abs=0.1)
    assert cubes.slope(cubes.stats.norm(2)) == pytest.approx(-5 / 6, abs=0.1)


def test_bernstein_single_mode_grid_independent():
    vals = []
    for n in (64, 128):
        g = GridSpec.cube(n, 2)
        u = gen_single_mode(g, q0=3)
        vals.append(bernstein_ratio(decompose(u).shells[3], 3, 2, np.inf, spatial_dim=2))
    assert vals[0] == pytest.approx(vals[1], rel=0.05)
    # closed form: ||sin||_inf / ||sin||_2 = sqrt(2), times 2^{-dim q / 2}
    assert vals[0] == pytest.approx(np.sqrt(2) / 2 ** 3, rel=1e-6)


def test_bernstein_inactive_and_bad_orders():
    z = np.zeros((1, 16, 16, 16, 3))
    assert bernstein_ratio(z, 2, 2, 3) is None
    with pytest.raises(ConfigurationError):
        bernstein_ratio(z, 2, 3, 2)


def test_bernstein_corpus_census(corpus):
    worst = 0.0
    for name in ("vortex-sheet", "frequency-cubes", "point-singularity-2d", "shear-stack"):
        a = corpus[name]
        for q in range(1, a.grid.q_max + 1):
            for r1, r2 in ((1, 2), (2, 3), (2, np.inf), (3, np.inf)):
                r = bernstein_ratio(a.dec.shells[q], q, r1, r2, a.grid.spatial_dim)
                if r is not None:
                    worst = max(worst, r)
    assert worst <= 10


def test_h_norm_scale_independent():
    for r, row in h_norm_ratios(GridSpec.cube(64)).items():
        vals = np.array([v for q, v in row.items() if q >= 1])
        ref = np.median(vals)
        assert np.all((vals >= 0.5 * ref) & (vals <= 1.5 * ref)), (r, vals)


def test_differential_bernstein(sheet, cubes):
    for a in (sheet, cubes):
        for q in range(0, a.grid.q_max + 1):
            r = gradient_ratio(a.dec, q)
            if r is not None:
                assert np.pi <= r <= 4 * np.pi
