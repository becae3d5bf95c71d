"""Versioned table of every tolerance and default used by the reports.

Each report embeds :data:`TOLERANCES` so a verdict can always be traced back
to the numbers it was judged against.
"""

from __future__ import annotations

TOLERANCES_VERSION = "1"

TOLERANCES = {
    "version": TOLERANCES_VERSION,
    # decomposition
    "partition_of_unity": 1e-12,
    "reconstruction_relative": 1e-10,
    "divergence_relative": 1e-8,
    # volume statistics
    "volume_identity_relative": 1e-12,
    "spectrum_identity_relative": 1e-10,
    "volume_bound_relative": 1e-12,
    "inactive_m2_relative": 1e-30,
    # active regions
    "sandwich_factor": 1.01,
    "region_constant_max": 100.0,
    # flux
    "flux_route_relative": 1e-10,
    "antisymmetry_relative": 1e-8,
    "flux_uniform_c_max": 100.0,
    "kernel_constant_max": 100.0,
    "monotone_slack_relative": 1e-12,
    # regularity map
    "singular_threshold_theta": 0.1,
    # structure functions
    "min_directions": 32,
    "zeta_report_band": 0.2,
}

DEFAULTS = {
    "sigma_schedule": "harmonic",
    "atom_order_M": 1,
    "multifractal_orders": [3, 4],
    "n_theta": 32,
    "separations": 6,
    "moment_oversample": 2,
    "flux_index_set": "complete",
    "sof_delta": 0.1,
}
