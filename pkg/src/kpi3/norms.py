"""Anisotropic Sobolev norms, the E^s scale, the Hamiltonian and frequency envelopes.

All norms carry the Plancherel factor (2 pi)^{-3/2}, so that every weighted
norm with unit weight coincides with the physical L^2 norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectral import (
    TWO_PI,
    BandMask,
    DomainSpec,
    SpectralField,
    band_project,
    build_grid,
    ifftn,
)


def weight_p(lam: float, xi, eta):
    """Transverse weight: 1 + |eta|/|xi| for lam = 1, lam^{-1/2} + |eta|/|xi| otherwise."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi == 0):
        raise ValueError("weight p is undefined at xi = 0")
    eta_abs = np.sqrt(np.sum(np.asarray(eta, dtype=float) ** 2, axis=-1))
    base = 1.0 if lam == 1 else lam**-0.5
    out = base + eta_abs / np.abs(xi)
    return out[()] if isinstance(out, np.ndarray) else out


_KINDS = ("E", "H", "Hdot", "L2")


@dataclass(frozen=True)
class NormSpec:
    """Which norm to evaluate.

    kind: ``"E"`` (E^s, uses ``s``), ``"H"`` (H^{s1,s2}), ``"Hdot"``
    (homogeneous H^{s1,s2}) or ``"L2"``.  ``lam`` selects the weight
    convention for E^s; ``None`` takes it from the field's domain.
    """

    kind: str = "L2"
    s: float = 0.0
    s1: float = 0.0
    s2: float = 0.0
    lam: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}; expected one of {_KINDS}")
        for v in (self.s, self.s1, self.s2):
            if not math.isfinite(v) or v < 0:
                raise ValueError("norm exponents must be finite and >= 0")
        if self.lam is not None and self.lam < 1:
            raise ValueError("lam must be >= 1")


def E(s: float, lam: Optional[float] = None) -> NormSpec:
    return NormSpec("E", s=s, lam=lam)


def H(s1: float, s2: float = 0.0) -> NormSpec:
    return NormSpec("H", s1=s1, s2=s2)


def Hdot(s1: float, s2: float = 0.0) -> NormSpec:
    return NormSpec("Hdot", s1=s1, s2=s2)


def norm_weight(domain: DomainSpec, spec: NormSpec) -> np.ndarray:
    """Fourier weight of ``spec`` on the lattice (zero on xi = 0 for E^s)."""
    g = build_grid(domain)
    if spec.kind == "L2":
        return np.ones(domain.shape)
    if spec.kind == "H":
        w = (1 + g.xi**2) ** (spec.s1 / 2) * (1 + g.eta_sq) ** (spec.s2 / 2)
    elif spec.kind == "Hdot":
        w = np.abs(g.xi) ** spec.s1 * g.eta_abs**spec.s2
    else:
        lam = domain.lam if spec.lam is None else spec.lam
        base = 1.0 if lam == 1 else lam**-0.5
        axi = np.abs(g.xi)
        p = np.where(axi == 0, 0.0, base + g.eta_abs / np.where(axi == 0, 1.0, axi))
        w = (1 + g.xi**2) ** (spec.s / 2) * p
    return np.broadcast_to(w, domain.shape)


def norm(f: SpectralField, spec: NormSpec) -> float:
    """Weighted dual-lattice L^2 norm of ``f``."""
    if spec.kind == "E" and not f.is_mean_zero():
        raise ValueError("E^s norm needs a mean-zero field")
    w = norm_weight(f.domain, spec)
    total = f.domain.dual_weight * float(np.sum((w * np.abs(f.coeffs)) ** 2))
    return math.sqrt(total) / TWO_PI**1.5


def pad_coeffs(coeffs: np.ndarray, factor: int = 2) -> np.ndarray:
    """Embed coefficients into a ``factor``-times larger FFT lattice.

    Nyquist entries are split evenly between +n/2 and -n/2, so the padded
    trigonometric polynomial is real whenever the original one is.
    """
    out = np.asarray(coeffs, dtype=complex)
    for ax in range(3):
        n = out.shape[ax]
        m = factor * n
        h = n // 2
        shape = list(out.shape)
        shape[ax] = m
        big = np.zeros(shape, dtype=complex)

        def sl(a, b=None, _ax=ax):
            idx = [slice(None)] * 3
            idx[_ax] = slice(a, b) if b is not None else a
            return tuple(idx)

        big[sl(0, h)] = out[sl(0, h)]
        big[sl(m - h + 1, m)] = out[sl(h + 1, n)]
        big[sl(h)] = 0.5 * out[sl(h)]
        big[sl(m - h)] = 0.5 * out[sl(h)]
        out = big
    return out


def cubic_integral(domain: DomainSpec, coeffs: np.ndarray) -> float:
    """Exact integral of u^3 for the real trigonometric polynomial with these coefficients."""
    g = build_grid(domain)
    if not np.any(coeffs * (1.0 - g.dealias_mask)):
        # 3|j| < n on every axis: no frequency triple aliases onto zero.
        u = ifftn(coeffs).real / domain.cell_volume
        return domain.cell_volume * float(np.sum(u**3))
    cell = domain.cell_volume / 8.0
    u = ifftn(pad_coeffs(coeffs)).real / cell
    return cell * float(np.sum(u**3))


def quadratic_energy(f: SpectralField, alpha: float) -> float:
    """Quadratic part of the Hamiltonian, summed on the dual lattice."""
    g = f.grid
    axi = np.abs(g.xi)
    safe = np.where(axi == 0, 1.0, axi)
    sym = np.where(axi == 0, 0.0, axi**alpha + g.eta_sq / safe**2)
    dens = f.domain.dual_weight * float(np.sum(sym * np.abs(f.coeffs) ** 2))
    return 0.5 * dens / TWO_PI**3


def energy(f: SpectralField, alpha: float, cutoff: Optional[np.ndarray] = None) -> float:
    """Hamiltonian int 1/2 |D_x^{a/2} u|^2 + 1/3 u^3 + 1/2 |d_x^{-1} grad_y u|^2.

    With ``cutoff`` (a real multiplier) the cubic term is evaluated on the
    projected field, which is the quantity conserved by the truncated flow.
    """
    if not f.is_mean_zero():
        raise ValueError("energy needs a mean-zero field")
    c = f.coeffs if cutoff is None else f.coeffs * cutoff
    return quadratic_energy(f, alpha) + cubic_integral(f.domain, c) / 3.0


# ---------------------------------------------------------------------------
# Frequency envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Envelope:
    levels: tuple
    pieces: np.ndarray
    values: np.ndarray

    def holds(self, delta: float, rtol: float = 1e-12) -> bool:
        """Both envelope properties, checked for every pair of levels."""
        lv = np.asarray(self.levels, dtype=float)
        if np.any(self.pieces > self.values * (1 + rtol) + 1e-300):
            return False
        ratio = dyadic_ratio(lv[:, None], lv[None, :])
        bound = ratio**delta * self.values[None, :] * (1 + rtol)
        return bool(np.all(self.values[:, None] <= bound))


def dyadic_ratio(N, J):
    N = np.asarray(N, dtype=float)
    J = np.asarray(J, dtype=float)
    return np.maximum(N / J, J / N)


def frequency_envelope(f: SpectralField, s: float, delta: float) -> Envelope:
    """c_N = sup_J [N/J]^{-delta} ||P_J f||_{E^s} over the grid's dyadic levels."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    levels = f.grid.inhomogeneous_levels()
    spec = E(s)
    pieces = np.array([norm(band_project(f, BandMask("lp", N=N)), spec) for N in levels])
    lv = np.asarray(levels, dtype=float)
    decay = dyadic_ratio(lv[:, None], lv[None, :]) ** (-delta)
    values = np.max(decay * pieces[None, :], axis=1)
    return Envelope(tuple(levels), pieces, values)
