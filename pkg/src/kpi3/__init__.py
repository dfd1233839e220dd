"""Pseudospectral toolkit for the three-dimensional KP-I equation with generalized dispersion."""

from .dispersion import (
    DEFAULT_SMALLNESS,
    DispersionParams,
    ResonanceBreakdown,
    grad_omega,
    is_resonant,
    omega,
    propagate,
    resonance_3d_split,
    resonance_breakdown,
)
from .evolve import BlowUpError, DiagnosticSeries, QuadratureError, SolverConfig, picard_second, simulate
from .norms import E, H, Hdot, NormSpec, energy, frequency_envelope, norm, weight_p
from .spectral import (
    BandMask,
    DomainSpec,
    SpectralField,
    band_project,
    build_grid,
    project_mean_zero,
    random_band_field,
    to_physical,
    to_spectral,
)

__version__ = "0.1.0"
