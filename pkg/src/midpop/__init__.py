"""Kinetic simulation of trait-structured populations with midpoint
inheritance and trait-dependent selection.

Public surface: selection rates, population states, the midpoint
reproduction operator, three solvers (grid, particle, spectral), the
closed moment hierarchy with certified envelopes, Fourier metrics, and
the scenario runner.
"""

from .ensemble import (
    GridDensity,
    MomentTrack,
    ParticleEnsemble,
    centered_stats,
    char_fn,
    raw_moments,
    standardize,
)
from .fourier_solver import SpectralState, residual
from .grid_solver import GridSolver, GridSolverConfig, discretize_profile, make_grid
from .hierarchy import (
    EnvelopeSpec,
    MomentODEState,
    contraction_rate,
    envelope,
    integrate,
    measured_remainder,
    moment_rhs,
    remainder_bound,
)
from .metrics import (
    RateFit,
    XiGrid,
    fit_rate,
    fourier_distance,
    limit_profile_cf,
    limit_profile_pdf,
    wasserstein_to_dirac,
)
from .particle_solver import ParticleSolver, ParticleSolverConfig
from .reproduction import offspring_density, offspring_moments, sample_offspring
from .selection import SelectionRate, selection_moments

__version__ = "0.1.0"

__all__ = [
    "EnvelopeSpec",
    "GridDensity",
    "GridSolver",
    "GridSolverConfig",
    "MomentODEState",
    "MomentTrack",
    "ParticleEnsemble",
    "ParticleSolver",
    "ParticleSolverConfig",
    "RateFit",
    "SelectionRate",
    "SpectralState",
    "XiGrid",
    "centered_stats",
    "char_fn",
    "contraction_rate",
    "discretize_profile",
    "envelope",
    "fit_rate",
    "fourier_distance",
    "integrate",
    "limit_profile_cf",
    "limit_profile_pdf",
    "make_grid",
    "measured_remainder",
    "moment_rhs",
    "offspring_density",
    "offspring_moments",
    "raw_moments",
    "remainder_bound",
    "residual",
    "sample_offspring",
    "selection_moments",
    "standardize",
    "wasserstein_to_dirac",
]
