"""Pseudo-spectral SQG solver with Littlewood-Paley, determining-wavenumber,
synchronization and De Giorgi diagnostics."""

from ._version import __version__
from .config import ConfigError, RunConfig, canonical_json, config_hash, parse_config
from .degiorgi import (
    DeGiorgiLadder,
    build_ladder,
    degiorgi_params,
    level_energies,
    level_energy_inequality_residual,
    linfty_bound,
    truncate,
    verify_iteration,
)
from .determining import (
    DeterminingParams,
    WavenumberResult,
    absorbing_radii,
    apriori_bound_critical,
    apriori_bound_subcritical,
    brute_force_wavenumber,
    c_alpha_r,
    determining_wavenumber,
    index_range,
    select_r,
    subcritical_wavenumber,
    wavenumber_trace,
)
from .littlewood_paley import besov_norm, decompose, low_pass, phi_q, shell_project, shell_system
from .runner import RunRecord, run, sweep
from .solver import (
    BlowUpError,
    ForcingSpec,
    SolverConfig,
    Trajectory,
    energy_budget_residual,
    energy_envelope,
    load_checkpoint,
    save_checkpoint,
    simulate,
    step,
)
from .spectral import Grid, PhysicalField, SpectralField, to_physical, to_spectral
from .sync import ICSpec, SyncConfig, SyncTrace, fit_decay_rate, run_synced_pair, slave_low_modes

__all__ = [name for name in dir() if not name.startswith("_")]
