"""Dispersion relation, its gradient, the linear propagator and resonances.

Frequencies are written ``k = (xi, eta)`` with ``eta`` a 2-vector; array
arguments broadcast, with ``eta`` carrying its two components on the last
axis.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .spectral import Grid, SpectralField, build_grid

DEFAULT_SMALLNESS = 1.0 / 16.0


@dataclass(frozen=True)
class DispersionParams:
    """Dispersion exponent and the constants derived from it."""

    alpha: float

    def __post_init__(self):
        if not (2.0 <= self.alpha <= 4.0):
            raise ValueError(f"alpha must lie in [2, 4], got {self.alpha}")

    @property
    def s_crit(self) -> float:
        """Regularity threshold s(alpha) = 3 - alpha/2."""
        return 3.0 - self.alpha / 2.0

    @property
    def timescale_exponent(self) -> float:
        return 2.0 - self.alpha / 2.0

    def time_scale(self, N: float) -> float:
        """Frequency-dependent analysis window T(N) = N^-(2 - alpha/2)."""
        return float(N) ** (-self.timescale_exponent)


def _nonzero(xi, what: str = "xi") -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if np.any(xi == 0):
        raise ValueError(f"{what} = 0: the symbol is only defined off the mean-zero plane")
    return xi


def _eta_sq(eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return np.sum(eta**2, axis=-1)


def omega(alpha: float, xi, eta):
    """Dispersion relation |xi|^alpha xi + |eta|^2 / xi."""
    xi = _nonzero(xi)
    out = np.abs(xi) ** alpha * xi + _eta_sq(eta) / xi
    return out[()] if isinstance(out, np.ndarray) else out


def grad_omega(alpha: float, xi, eta) -> np.ndarray:
    """Gradient ((alpha+1)|xi|^alpha - |eta|^2/xi^2, 2 eta/xi), shape (..., 3)."""
    xi = _nonzero(xi)
    eta = np.asarray(eta, dtype=float)
    dxi = (alpha + 1.0) * np.abs(xi) ** alpha - _eta_sq(eta) / xi**2
    deta = 2.0 * eta / np.asarray(xi)[..., None]
    return np.concatenate([np.asarray(dxi)[..., None], deta], axis=-1)


def kdv_resonance(alpha: float, xi1, xi2):
    """Resonance of the dispersion-generalised KdV equation."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    s = xi1 + xi2
    return np.abs(s) ** alpha * s - np.abs(xi1) ** alpha * xi1 - np.abs(xi2) ** alpha * xi2


def resonance(alpha: float, xi1, eta1, xi2, eta2):
    """omega(k1) + omega(k2) - omega(k1 + k2), evaluated directly."""
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    xi1 = _nonzero(xi1, "xi1")
    xi2 = _nonzero(xi2, "xi2")
    _nonzero(xi1 + xi2, "xi1 + xi2")
    return omega(alpha, xi1, eta1) + omega(alpha, xi2, eta2) - omega(alpha, xi1 + xi2, eta1 + eta2)


def transverse_term(xi1, eta1, xi2, eta2):
    """xi1 xi2 / (xi1 + xi2) * |eta1/xi1 - eta2/xi2|^2."""
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    d = np.asarray(eta1, dtype=float) / xi1[..., None] - np.asarray(eta2, dtype=float) / xi2[..., None]
    return xi1 * xi2 / (xi1 + xi2) * np.sum(d**2, axis=-1)


@dataclass(frozen=True)
class ResonanceBreakdown:
    omega_sum: float
    kdv_part: float
    transverse_part: float
    resonant: bool


def resonance_breakdown(alpha: float, k1, k2, smallness: float = DEFAULT_SMALLNESS) -> ResonanceBreakdown:
    """Split the resonance of the pair ``k1 = (xi1, eta1)``, ``k2 = (xi2, eta2)``.

    ``resonant`` is ``|omega_sum| < smallness * |kdv_part|``; the implicit
    constant hidden in "much less than" is the ``smallness`` knob.
    """
    (xi1, eta1), (xi2, eta2) = k1, k2
    om = resonance(alpha, xi1, eta1, xi2, eta2)
    kdv = kdv_resonance(alpha, xi1, xi2)
    tr = transverse_term(xi1, eta1, xi2, eta2)
    return ResonanceBreakdown(
        omega_sum=float(om),
        kdv_part=float(kdv),
        transverse_part=float(tr),
        resonant=bool(abs(om) < smallness * abs(kdv)),
    )


def is_resonant(alpha: float, xi1, eta1, xi2, eta2, smallness: float = DEFAULT_SMALLNESS):
    """Vectorised resonance condition |Omega| < smallness |Omega_KdV|."""
    om = resonance(alpha, xi1, eta1, xi2, eta2)
    return np.abs(om) < smallness * np.abs(kdv_resonance(alpha, xi1, xi2))


def resonance_3d_split(alpha: float, k1, k2) -> tuple[float, float]:
    """Two-dimensional resonance and shear term for ``k = (xi, eta, mu)``.

    The 2d resonance is taken with the sum-minus-parts sign,
    ``omega(k1+k2) - omega(k1) - omega(k2)`` restricted to (xi, eta), so that
    the full 3d resonance in the same convention is ``omega_2d - shear`` with
    ``shear = (xi1 mu2 - xi2 mu1)^2 / (xi1 xi2 (xi1 + xi2))``.
    """
    xi1, e1, m1 = (float(v) for v in k1)
    xi2, e2, m2 = (float(v) for v in k2)
    om2d = -resonance(alpha, xi1, [e1], xi2, [e2])
    shear = (xi1 * m2 - xi2 * m1) ** 2 / (xi1 * xi2 * (xi1 + xi2))
    return float(om2d), float(shear)


# ---------------------------------------------------------------------------
# Lattice symbols and the propagator
# ---------------------------------------------------------------------------


def omega_symbol(grid: Grid, alpha: float) -> np.ndarray:
    """omega on the lattice; zero on the xi = 0 plane and on Nyquist planes.

    Nyquist entries use the odd-safe wavenumbers so that exp(i t omega)
    preserves Hermitian symmetry exactly.
    """
    return _omega_symbol(grid.spec, float(alpha))


@functools.lru_cache(maxsize=32)
def _omega_symbol(spec, alpha: float) -> np.ndarray:
    grid = build_grid(spec)
    xi = grid.xi_odd
    eta_sq = grid.eta1_odd**2 + grid.eta2_odd**2
    safe = np.where(xi == 0, 1.0, xi)
    om = np.abs(safe) ** alpha * safe + eta_sq / safe
    om = np.where(xi == 0, 0.0, om)
    om.setflags(write=False)
    return om


def propagate(f: SpectralField, t: float, alpha: float) -> SpectralField:
    """Apply the linear group exp(i t omega) coefficient-wise."""
    if not f.is_mean_zero():
        raise ValueError("propagate requires a mean-zero field (xi = 0 plane must vanish)")
    if t == 0:
        return f
    return f.with_coeffs(f.coeffs * np.exp(1j * t * omega_symbol(f.grid, alpha)))
