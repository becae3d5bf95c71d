"""Analytically understood example fields and their expected scalings.

Generators
----------
* :func:`gen_vortex_sheet` — periodic shear layer ``u = (H(z), 0, 0)`` with
  jumps at ``z = 0`` and ``z = L/2``.
* :func:`gen_shear_stack` — smooth 2D parallel shear ``e_2 sum_q lambda_q^{-s} sin(2 pi lambda_q x_1)``.
* :func:`gen_point_singularity_2d` — ``u = grad-perp(r^{2/3} Psi(theta))``.
* :func:`gen_point_singularity_3d` — ``u = r^{-2/3} U(omega)``.
* :func:`gen_frequency_cubes` — spectral cubes of constant amplitude
  ``lambda_q^{-7/3}`` centred at ``lambda_q e_1``.
* :func:`gen_single_mode` — ``u = e_2 A sin(2 pi lambda_{q0} x_1)``.

Discontinuous and homogeneous profiles are built *spectrally*: their exact
Fourier coefficients are evaluated on the lattice and truncated at Nyquist.
Sampling such profiles pointwise aliases the jump/cusp into every shell and
masks the scaling at the grid sizes of interest, whereas the truncated series
has shells that coincide with the shells of the continuum profile.  The
direct-sampling construction (smooth radial cutoff at ``L/4``, origin clamp)
is still available through ``method="sampled"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.special import gamma

from .grid import (
    ConfigurationError,
    GridSpec,
    VelocityField,
    coordinates,
    half_wavenumbers,
    half_kabs,
    irfft_field,
    nyquist_mask,
    rfft_field,
)
from .lp import chi

__all__ = [
    "gen_vortex_sheet",
    "gen_shear_stack",
    "gen_point_singularity_2d",
    "gen_point_singularity_3d",
    "gen_frequency_cubes",
    "gen_single_mode",
    "ode_residual",
    "psi_flux",
    "ScalingExpectation",
    "CorpusEntry",
    "CORPUS",
    "corpus_manifest",
    "synthesize",
    "homogeneous_coefficient",
]


# ---------------------------------------------------------------------------
# vortex sheet
# ---------------------------------------------------------------------------

def gen_vortex_sheet(grid: GridSpec) -> VelocityField:
    """Stationary periodic vortex sheet ``u = (H(z), 0, 0)``.

    ``H`` is 1 on ``(0, L/2)`` and 0 on ``(L/2, L)``; its Fourier series
    ``1/2 + sum_{k odd} e^{2 pi i k z/L} / (i pi k)`` is truncated at Nyquist.
    """
    if grid.spatial_dim != 3:
        raise ConfigurationError("the vortex sheet is a 3D field")
    nz = grid.nz
    kz = np.fft.fftfreq(nz, 1.0 / nz).astype(int)
    coef = np.zeros(nz, dtype=complex)
    coef[0] = 0.5
    odd = (kz % 2 != 0) & (np.abs(kz) < nz // 2)
    coef[odd] = 1.0 / (1j * np.pi * kz[odd])
    profile = np.fft.ifft(coef, norm="forward").real
    samples = np.zeros(grid.shape)
    samples[..., 0] = profile[None, None, None, :]
    return VelocityField(grid, samples, metadata="vortex-sheet", divergence_free=True)


def sheet_increment_oracle(ell: float, nz: int, L: float = 1.0) -> float:
    """``<|u(z+ell) - u(z)|^2>`` for the truncated sheet series (direct mode sum).

    Equals ``sum_{k odd, |k|<nz/2} 4 sin^2(pi k ell/L) / (pi k)^2``; tends to
    ``2 ell / L`` for ``ell << L`` (two unit jumps per period).
    """
    k = np.arange(1, nz // 2, 2, dtype=float)
    return float(2.0 * np.sum(4.0 * np.sin(np.pi * k * ell / L) ** 2 / (np.pi * k) ** 2))


# ---------------------------------------------------------------------------
# shear stack and single mode
# ---------------------------------------------------------------------------

def gen_shear_stack(grid: GridSpec, s: float = 3.0, q_range=None) -> VelocityField:
    """Smooth parallel shear ``u = e_2 sum_q lambda_q^{-s} sin(2 pi lambda_q x_1)``."""
    if grid.spatial_dim != 2:
        raise ConfigurationError("the shear stack is a 2D field")
    if not s > 2:
        raise ConfigurationError("shear stack needs s > 2")
    if q_range is None:
        q_range = (0, grid.q_max)
    lo, hi = q_range
    if hi > grid.q_max or lo < 0:
        raise ConfigurationError(f"q_range {q_range} exceeds the resolvable range [0, {grid.q_max}]")
    x, _, _ = coordinates(grid)
    prof = np.zeros_like(x)
    for q in range(lo, hi + 1):
        lam = grid.lam(q)
        prof = prof + lam ** (-s) * np.sin(2 * np.pi * lam * x)
    samples = np.zeros(grid.shape)
    samples[..., 1] = np.broadcast_to(prof, grid.spatial_shape)[None]
    return VelocityField(grid, samples, metadata=f"shear-stack s={s} q={lo}..{hi}", divergence_free=True)


def gen_single_mode(grid: GridSpec, q0: int = 3, A: float = 1.0) -> VelocityField:
    """``u = e_2 A sin(2 pi lambda_{q0} x_1)`` with ``lambda_{q0} = 2^{q0}/L``."""
    if not (0 <= q0 <= grid.q_max):
        raise ConfigurationError(f"q0 = {q0} outside [0, {grid.q_max}]")
    x, _, _ = coordinates(grid)
    prof = A * np.sin(2 * np.pi * grid.lam(q0) * x)
    samples = np.zeros(grid.shape)
    samples[..., 1] = np.broadcast_to(prof, grid.spatial_shape)[None]
    return VelocityField(grid, samples, metadata=f"single-mode q0={q0} A={A}", divergence_free=True)


# ---------------------------------------------------------------------------
# homogeneous point singularities
# ---------------------------------------------------------------------------

def homogeneous_coefficient(degree: int, beta: float, n: int) -> complex:
    """Fourier multiplier of ``|x|^beta Y(x/|x|)`` on R^n, Y a spherical harmonic of ``degree``.

    With the ``exp(-2 pi i x.xi)`` convention the transform is
    ``gamma * |xi|^{-n-beta} Y(xi/|xi|)`` (away from ``xi = 0``), where
    ``gamma = i^{-k} pi^{-beta - n/2} Gamma((k + n + beta)/2) / Gamma((k - beta)/2)``.
    """
    k = degree
    return (1j) ** (-k) * np.pi ** (-beta - n / 2.0) * gamma((k + n + beta) / 2.0) / gamma((k - beta) / 2.0)


def _angular_coefficients(Psi, m_max: int, n_theta: int = 256) -> dict:
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    vals = np.asarray(Psi(th), dtype=float)
    c = np.fft.fft(vals) / n_theta
    out = {}
    for m in range(-m_max, m_max + 1):
        a = c[m % n_theta]
        if abs(a) > 1e-14 * np.max(np.abs(c)):
            out[m] = a
    return out


def _check_periodic(Psi):
    ends = np.asarray(Psi(np.array([0.0, 2 * np.pi])), dtype=float)
    if not np.isclose(ends[0], ends[1], rtol=1e-10, atol=1e-12):
        raise ConfigurationError("Psi must be 2 pi periodic")


def gen_point_singularity_2d(grid: GridSpec, Psi=np.cos, method: str = "spectral", m_max: int = 16,
                             reg_radius: float | None = None) -> VelocityField:
    """2D field ``u = grad-perp psi`` with ``psi = r^{2/3} Psi(theta)`` near the origin.

    ``method="spectral"`` evaluates the exact lattice coefficients of the
    homogeneous stream function (``|k|^{-8/3}`` times angular factors, mean
    mode dropped).  ``method="sampled"`` samples
    ``r^{2/3} Psi(theta) chi(r/(L/4))`` with ``r`` clamped to ``reg_radius``
    (default half a grid cell) and differentiates spectrally.
    """
    if grid.spatial_dim != 2:
        raise ConfigurationError("2D point singularity needs a 2D grid")
    _check_periodic(Psi)
    if method == "spectral":
        kx, ky, _ = half_wavenumbers(grid)
        kabs = half_kabs(grid)
        theta_k = np.arctan2(ky, kx)
        ksafe = np.where(kabs > 0, kabs, 1.0)
        psi_h = np.zeros(kabs.shape, dtype=complex)
        for m, a in _angular_coefficients(Psi, m_max).items():
            g = homogeneous_coefficient(abs(m), 2.0 / 3.0, 2)
            psi_h = psi_h + a * g * np.exp(1j * m * theta_k)
        psi_h = psi_h * ksafe ** (-8.0 / 3.0) / grid.L ** 2
        psi_h[kabs == 0] = 0.0
        reg = "spectral truncation at Nyquist"
    elif method == "sampled":
        x, y, _ = coordinates(grid, centered=True)
        r = np.sqrt(x ** 2 + y ** 2)
        th = np.arctan2(y, x)
        r0 = reg_radius if reg_radius is not None else 0.5 * grid.L / grid.nx
        psi = np.maximum(r, r0) ** (2.0 / 3.0) * Psi(th) * chi(r / (grid.L / 4))
        psi_h = rfft_field(np.broadcast_to(psi, grid.spatial_shape)[None], grid)[0]
        reg = f"radius clamp r0={r0!r}, cutoff chi(r/(L/4))"
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    kx, ky, _ = half_wavenumbers(grid)
    psi_h = np.where(nyquist_mask(grid), psi_h, 0.0)
    uh = np.stack([-2j * np.pi * ky * psi_h, 2j * np.pi * kx * psi_h], axis=-1)
    samples = irfft_field(uh[None], grid)
    samples = np.broadcast_to(samples, grid.shape).copy()
    return VelocityField(grid, samples, metadata=f"point-singularity-2d method={method} regularization={reg}",
                         divergence_free=True)


def gen_point_singularity_3d(grid: GridSpec, a=(0.0, 0.0, 1.0), B=None, method: str = "spectral",
                             reg_radius: float | None = None) -> VelocityField:
    """3D field ``u = r^{-2/3} U(omega)`` with ``U(omega) = a + B omega``.

    The constant part is a degree-0 and ``B omega`` a degree-1 spherical
    harmonic, so the spectral construction is exact: ``u_hat(k) =
    |k|^{-7/3} (gamma_0 a + gamma_1 B k/|k|) / L^3``.  ``method="sampled"``
    samples the profile times ``chi(r/(L/4))`` with ``r`` clamped.
    """
    if grid.spatial_dim != 3:
        raise ConfigurationError("3D point singularity needs a 3D grid")
    a = np.asarray(a, dtype=float)
    B = np.zeros((3, 3)) if B is None else np.asarray(B, dtype=float)
    if method == "spectral":
        ks = half_wavenumbers(grid)
        kabs = half_kabs(grid)
        ksafe = np.where(kabs > 0, kabs, 1.0)
        g0 = homogeneous_coefficient(0, -2.0 / 3.0, 3)
        g1 = homogeneous_coefficient(1, -2.0 / 3.0, 3)
        khat = [k / ksafe for k in ks]
        comps = []
        for i in range(3):
            c = g0 * a[i] + g1 * sum(B[i, j] * khat[j] for j in range(3))
            c = np.broadcast_to(c, kabs.shape) * ksafe ** (-7.0 / 3.0) / grid.L ** 3
            c = np.where((kabs > 0) & nyquist_mask(grid), c, 0.0)
            comps.append(c)
        uh = np.stack(comps, axis=-1)
        samples = irfft_field(uh[None], grid)
        reg = "spectral truncation at Nyquist"
    elif method == "sampled":
        x, y, z = coordinates(grid, centered=True)
        r = np.sqrt(x ** 2 + y ** 2 + z ** 2)
        r0 = reg_radius if reg_radius is not None else 0.5 * grid.L / grid.nx
        rr = np.maximum(r, r0)
        om = [x / rr, y / rr, z / rr]
        cut = chi(r / (grid.L / 4)) * rr ** (-2.0 / 3.0)
        samples = np.stack([(a[i] + sum(B[i, j] * om[j] for j in range(3))) * cut for i in range(3)], axis=-1)[None]
        reg = f"radius clamp r0={r0!r}, cutoff chi(r/(L/4))"
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    samples = np.broadcast_to(samples, grid.shape).copy()
    return VelocityField(grid, samples, metadata=f"point-singularity-3d method={method} regularization={reg}")


def ode_residual(Psi, P: float, n_theta: int = 512) -> float:
    """``max_theta |3 Psi'^2 + 4 Psi^2 + 6 Psi Psi'' - P|`` with spectral derivatives."""
    _check_periodic(Psi)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    v = np.asarray(Psi(th), dtype=float)
    m = np.fft.fftfreq(n_theta, 1.0 / n_theta)
    vh = np.fft.fft(v)
    d1 = np.fft.ifft(1j * m * vh).real
    d2 = np.fft.ifft(-(m ** 2) * vh).real
    return float(np.max(np.abs(3 * d1 ** 2 + 4 * v ** 2 + 6 * v * d2 - P)))


def psi_flux(Psi, n_theta: int = 512) -> float:
    """``int_0^{2 pi} Psi'(theta)^3 d theta`` (periodic trapezoid, spectral derivative)."""
    _check_periodic(Psi)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    v = np.asarray(Psi(th), dtype=float)
    m = np.fft.fftfreq(n_theta, 1.0 / n_theta)
    d1 = np.fft.ifft(1j * m * np.fft.fft(v)).real
    return float(np.sum(d1 ** 3) * (2 * np.pi / n_theta))


# ---------------------------------------------------------------------------
# frequency cubes
# ---------------------------------------------------------------------------

#: cube side = floor(lambda_q L / CUBE_DIVISOR) lattice modes
CUBE_DIVISOR = 2


def cube_side(q: int, divisor: int = CUBE_DIVISOR) -> int:
    return int(2 ** q // divisor)


def gen_frequency_cubes(grid: GridSpec, q_range=None, divisor: int = CUBE_DIVISOR) -> VelocityField:
    """Superposition of constant-amplitude spectral cubes.

    For each ``q`` a cube ``C_q`` of ``N_q = floor(2^q / divisor)`` lattice
    modes per side is placed at ``k_1 in [2^q - N_q/2, 2^q + N_q/2)`` and
    ``k_2, k_3 in [-N_q/2, N_q/2)``; the coefficient is ``lambda_q^{-7/3} e_2``
    on ``C_q``.  Real-part symmetrisation halves it on ``C_q`` and on ``-C_q``
    so the field is ``sum_q lambda_q^{-7/3} Re sum_{k in C_q} e^{2 pi i k.x}``.
    """
    if grid.spatial_dim != 3:
        raise ConfigurationError("frequency cubes are a 3D field")
    qs_ok = [q for q in range(0, grid.q_max + 1) if cube_side(q, divisor) >= 1]
    if q_range is None:
        q_range = (qs_ok[0], grid.q_max)
    lo, hi = q_range
    n = grid.spatial_shape
    uh = np.zeros(n, dtype=complex)
    for q in range(lo, hi + 1):
        N = cube_side(q, divisor)
        if N < 1:
            raise ConfigurationError(f"cube for q={q} is empty")
        c = -(N // 2)
        r1 = np.arange(2 ** q + c, 2 ** q + c + N)
        rt = np.arange(c, c + N)
        if r1.max() >= n[0] // 2 or rt.max() >= min(n[1], n[2]) // 2 or -rt.min() >= min(n[1], n[2]) // 2:
            raise ConfigurationError(f"cube for q={q} collides with Nyquist")
        amp = 0.5 * grid.lam(q) ** (-7.0 / 3.0)
        uh[np.ix_(r1 % n[0], rt % n[1], rt % n[2])] += amp
        uh[np.ix_((-r1) % n[0], (-rt) % n[1], (-rt) % n[2])] += amp
    prof = sfft.ifftn(uh, norm="forward").real
    samples = np.zeros(grid.shape)
    samples[..., 1] = prof[None]
    return VelocityField(grid, samples, metadata=f"frequency-cubes q={lo}..{hi} divisor={divisor}")


# ---------------------------------------------------------------------------
# corpus registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingExpectation:
    """Expected log2-slope of a quantity against q, with tolerance and basis."""

    quantity: str
    exponent: float
    tolerance: float
    basis: str
    note: str = ""


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    spatial_dim: int
    default_n: int
    params: dict = field(default_factory=dict)
    expectations: tuple = ()

    def generate(self, n: int | None = None, **overrides) -> VelocityField:
        return synthesize(self.name, n=n, **overrides)


CORPUS = {
    "vortex-sheet": CorpusEntry(
        "vortex-sheet", 3, 128, {},
        (
            ScalingExpectation("m2", -1.0, 0.1, "analytic", "<|u_q|^p> ~ ell_q"),
            ScalingExpectation("m3", -1.0, 0.1, "analytic", "<|u_q|^p> ~ ell_q"),
            ScalingExpectation("d", 2.0, 0.2, "analytic", "dimension of the sheet"),
            ScalingExpectation("box_dimension", 2.0, 0.3, "analytic", "box count of the slab proxy"),
            ScalingExpectation("S2_slope", 1.0, 0.1, "derived", "mode-sum oracle for the two-jump profile"),
        ),
    ),
    "shear-stack": CorpusEntry(
        "shear-stack", 2, 512, {"s": 3.0},
        (
            ScalingExpectation("d", 2.0, 0.2, "analytic", "V_q ~ 1"),
        ),
    ),
    "point-singularity-2d": CorpusEntry(
        "point-singularity-2d", 2, 512, {},
        (
            ScalingExpectation("m2", -(2 - 2 / 3), 0.15, "analytic", "<|u_q|^p> ~ ell_q^(2-p/3)"),
            ScalingExpectation("m3", -1.0, 0.15, "analytic", "<|u_q|^p> ~ ell_q^(2-p/3)"),
            ScalingExpectation("d", 0.0, 0.3, "analytic", "accumulant is the origin"),
            ScalingExpectation("box_dimension", 0.0, 0.4, "analytic", "accumulant is the origin"),
        ),
    ),
    "point-singularity-3d": CorpusEntry(
        "point-singularity-3d", 3, 128, {},
        (
            ScalingExpectation("m2", -(3 - 4 / 3), 0.2, "analytic", "<|u_q|^p> ~ ell_q^(3-2p/3)"),
            ScalingExpectation("m3", -1.0, 0.2, "analytic", "<|u_q|^p> ~ ell_q^(3-2p/3)"),
            ScalingExpectation("V", -3.0, 0.3, "analytic", "V_q ~ ell_q^3"),
            ScalingExpectation("d", 0.0, 0.4, "analytic", "d = 0"),
        ),
    ),
    "frequency-cubes": CorpusEntry(
        "frequency-cubes", 3, 128, {},
        (
            ScalingExpectation("norm3", -1.0 / 3.0, 0.1, "analytic", "||u_q||_3 ~ lambda_q^(-1/3)"),
            ScalingExpectation("norm2", -5.0 / 6.0, 0.1, "analytic", "||u_q||_2 ~ lambda_q^(-5/6)"),
            ScalingExpectation("V", -3.0, 0.3, "analytic", "V_q ~ lambda_q^-3"),
            ScalingExpectation("d", 0.0, 0.3, "analytic", "d = 0"),
            ScalingExpectation("origin_peak", 2.0 / 3.0, 0.15, "analytic", "|u_q(0)| ~ lambda_q^(2/3)"),
        ),
    ),
    "single-mode": CorpusEntry(
        "single-mode", 3, 64, {"q0": 2, "A": 1.0},
        (
            ScalingExpectation("V_ratio", 9 * np.pi ** 2 / 128, 1e-4, "derived", "closed-form sinusoid averages"),
        ),
    ),
}


def synthesize(name: str, n: int | None = None, **params) -> VelocityField:
    """Generate corpus field ``name`` on an isotropic grid of ``n`` points per axis."""
    if name not in CORPUS:
        raise ConfigurationError(f"unknown corpus field {name!r}; choose from {sorted(CORPUS)}")
    entry = CORPUS[name]
    n = entry.default_n if n is None else int(n)
    grid = GridSpec.cube(n, spatial_dim=entry.spatial_dim, L=float(params.pop("L", 1.0)))
    kw = dict(entry.params)
    kw.update(params)
    if name == "vortex-sheet":
        return gen_vortex_sheet(grid)
    if name == "shear-stack":
        return gen_shear_stack(grid, s=float(kw.get("s", 3.0)), q_range=kw.get("q_range"))
    if name == "point-singularity-2d":
        return gen_point_singularity_2d(grid, method=kw.get("method", "spectral"))
    if name == "point-singularity-3d":
        return gen_point_singularity_3d(grid, method=kw.get("method", "spectral"))
    if name == "frequency-cubes":
        return gen_frequency_cubes(grid, q_range=kw.get("q_range"))
    return gen_single_mode(grid, q0=int(kw.get("q0", 2)), A=float(kw.get("A", 1.0)))


def corpus_manifest() -> str:
    """JSON text of the corpus manifest (``corpus.json``)."""
    out = {"schema": "corpus/1", "entries": []}
    for entry in CORPUS.values():
        out["entries"].append({
            "name": entry.name,
            "spatial_dim": entry.spatial_dim,
            "default_n": entry.default_n,
            "params": entry.params,
            "expected": [
                {"quantity": e.quantity, "exponent": e.exponent, "tolerance": e.tolerance,
                 "basis": e.basis, "note": e.note}
                for e in entry.expectations
            ],
        })
    return json.dumps(out, indent=2, sort_keys=True) + "\n"
