"""Periodic grid, spectral transform and averaging bracket."""

import numpy as np
import pytest

from conftest import random_solenoidal
from intermit.grid import (ConfigurationError, GridSpec, VelocityField, coordinates, from_spectral,
                           lattice_norm, space_time_average, spectral_derivative, to_spectral)


def _field(grid, fn):
    """Build a field from fn(x, y, z) -> list of components."""
    X = coordinates(grid)
    comps = fn(*X)
    s = np.stack([np.broadcast_to(c, grid.spatial_shape) for c in comps], axis=-1)[None]
    return VelocityField(grid, np.repeat(s, grid.nt, axis=0))


@pytest.mark.parametrize("kwargs", [
    dict(nx=12, ny=16, nz=16), dict(nx=4, ny=16, nz=16), dict(nx=16, ny=16, nz=16, L=0.0),
    dict(nx=16, ny=16, nz=16, T=-1.0), dict(nx=16, ny=16, nz=16, nt=0),
    dict(nx=16, ny=16, nz=4, spatial_dim=2), dict(nx=16, ny=16, nz=16, spatial_dim=4),
])
def test_gridspec_rejects_invalid(kwargs):
    with pytest.raises(ConfigurationError):
        GridSpec(**kwargs)


def test_gridspec_geometry():
    g = GridSpec.cube(128, L=2.0)
    assert g.q_max == 5 and 2 ** (g.q_max + 1) <= 128 // 2
    assert g.lam(3) == pytest.approx(4.0) and g.ell(3) == pytest.approx(0.25)
    assert g.volume == 8.0
    g2 = GridSpec.cube(64, 2)
    assert g2.shape == (1, 64, 64, 1, 2) and g2.q_max == 4


def test_constant_field_spectrum():
    g = GridSpec.cube(16)
    c = np.array([0.3, -1.2, 2.0])
    u = VelocityField(g, np.broadcast_to(c, g.shape).copy())
    sp = to_spectral(u)
    assert np.allclose(sp.mode((0, 0, 0)), c, atol=1e-15)
    rest = sp.coefficients.copy()
    rest[0, 0, 0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-15


@pytest.mark.parametrize("n", [16, 32])
def test_single_harmonic_two_modes(n):
    g = GridSpec.cube(n)
    u = _field(g, lambda x, y, z: [0 * x, np.sin(2 * np.pi * x), 0 * x])
    sp = to_spectral(u)
    c = sp.coefficients[0]
    nz = np.argwhere(np.abs(c) > 1e-12)
    assert len(nz) == 2
    assert np.allclose(sp.mode((1, 0, 0)), [0, -0.5j, 0], atol=1e-14)
    assert np.allclose(sp.mode((-1, 0, 0)), [0, 0.5j, 0], atol=1e-14)


def test_round_trip_and_hermitian(rng):
    g = GridSpec.cube(16, nt=2)
    u = VelocityField(g, rng.standard_normal(g.shape))
    sp = to_spectral(u)
    back = from_spectral(sp)
    assert np.max(np.abs(back.samples - u.samples)) <= 1e-12 * np.max(np.abs(u.samples))
    c = sp.coefficients
    flipped = np.conj(np.roll(np.flip(c, axis=(1, 2, 3)), 1, axis=(1, 2, 3)))
    assert np.max(np.abs(c - flipped)) <= 1e-12 * np.max(np.abs(c))


def test_parseval(rng):
    g = GridSpec.cube(32, 2)
    u = VelocityField(g, rng.standard_normal(g.shape))
    lhs = space_time_average(np.sum(u.samples ** 2, axis=-1))
    rhs = float(np.sum(np.abs(to_spectral(u).coefficients) ** 2))
    assert abs(lhs - rhs) <= 1e-10 * lhs


def test_derivative_of_sine():
    g = GridSpec.cube(32, L=1.0)
    u = _field(g, lambda x, y, z: [np.sin(2 * np.pi * x), 0 * x, 0 * x])
    du = from_spectral(spectral_derivative(to_spectral(u), 0)).samples[..., 0]
    X = coordinates(g)[0]
    exact = 2 * np.pi * np.cos(2 * np.pi * np.broadcast_to(X, g.spatial_shape))[None]
    assert np.max(np.abs(du - exact)) <= 1e-12 * 2 * np.pi


def test_derivative_of_constant_and_bad_axis():
    g = GridSpec.cube(16, 2)
    u = VelocityField(g, np.ones(g.shape))
    d = from_spectral(spectral_derivative(to_spectral(u), 1)).samples
    assert np.max(np.abs(d)) < 1e-14
    with pytest.raises(ConfigurationError):
        spectral_derivative(to_spectral(u), 2)


@pytest.mark.parametrize("q", [1, 3, 4])
def test_derivative_ratio_is_two_pi_lambda(q):
    g = GridSpec.cube(64)
    lam = float(g.lam(q))
    u = _field(g, lambda x, y, z: [0 * x, np.sin(2 * np.pi * lam * x), 0 * x])
    du = from_spectral(spectral_derivative(to_spectral(u), 0))
    ratio = lattice_norm(du.samples, 2) / lattice_norm(u.samples, 2)
    assert ratio == pytest.approx(2 * np.pi * lam, rel=1e-10)


def test_space_time_average_oracles():
    g = GridSpec(256, 8, 8)
    X = np.broadcast_to(coordinates(g)[0], g.spatial_shape)
    assert space_time_average(np.full((3, 4), 2.5)) == 2.5
    assert space_time_average(np.sin(2 * np.pi * X) ** 2) == pytest.approx(0.5, abs=1e-12)
    assert space_time_average(np.abs(np.sin(2 * np.pi * X)) ** 3) == pytest.approx(4 / (3 * np.pi), abs=1e-6)
    with pytest.raises(ConfigurationError):
        space_time_average(np.array([]))


def test_average_linear_and_monotone(rng):
    a, b = rng.standard_normal((2, 50))
    assert space_time_average(2 * a + 3 * b) == pytest.approx(2 * space_time_average(a) + 3 * space_time_average(b))
    assert space_time_average(a ** 2) >= 0


def test_divergence_flag_is_checked(rng):
    g = GridSpec.cube(16)
    s = random_solenoidal(g, rng)
    VelocityField(g, s, divergence_free=True)
    with pytest.raises(ConfigurationError):
        VelocityField(g, rng.standard_normal(g.shape), divergence_free=True)


def test_nonfinite_and_shape_rejected():
    g = GridSpec.cube(8)
    bad = np.zeros(g.shape)
    bad[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(ConfigurationError):
        VelocityField(g, bad)
    with pytest.raises(ConfigurationError):
        VelocityField(g, np.zeros((1, 8, 8, 8, 2)))


def test_samples_are_read_only(rng):
    g = GridSpec.cube(8)
    u = VelocityField(g, rng.standard_normal(g.shape))
    with pytest.raises(ValueError):
        u.samples[0, 0, 0, 0, 0] = 1.0
