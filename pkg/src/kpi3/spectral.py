"""Grids, transforms and frequency projections on rescaled periodic domains.

The spatial domain is ``T_nu x T_lam x T_lam`` with circumferences
``2*pi*nu`` and ``2*pi*lam`` where ``nu = lam**(2/(alpha+2))``.  Directions
that model the real line are realised as large tori; the ``*_periodic`` flags
only record which regime a run approximates.

Fourier coefficients are stored on the full (unshifted) FFT lattice and are
normalised so that

    f_hat(xi, eta) = int exp(-i x xi - i y.eta) f(x, y) dx dy,

with the dual lattice ``(1/nu)Z x (1/lam)Z^2`` carrying the counting measure
weighted by ``1/(nu*lam**2)``.  With these conventions

    ||f||_{L^2(phys)} = (2*pi)**(-3/2) * ||f_hat||_{L^2(dual)}

independently of ``lam``.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * math.pi

_workers: int = int(os.environ.get("KPI3_THREADS", "1") or 1)


def set_fft_workers(n: Optional[int]) -> None:
    """Cap the number of threads used by the FFT backend (``None`` resets to 1)."""
    global _workers
    _workers = max(1, int(n or 1))


def fft_workers() -> int:
    return _workers


def fftn(a: np.ndarray, axes=None) -> np.ndarray:
    return sfft.fftn(a, axes=axes, workers=_workers)


def ifftn(a: np.ndarray, axes=None) -> np.ndarray:
    return sfft.ifftn(a, axes=axes, workers=_workers)


# ---------------------------------------------------------------------------
# Domain and grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of the rescaled domain and its discretisation.

    Attributes:
        lam: transverse period scale (>= 1); y-directions have period 2*pi*lam.
        alpha: dispersion exponent in [2, 4]; fixes nu = lam**(2/(alpha+2)).
        nx, ny1, ny2: grid sizes, even and >= 8.
        x_periodic, y1_periodic, y2_periodic: whether a direction models a
            torus (True) or a truncated real line (False).
    """

    lam: float = 1.0
    alpha: float = 2.0
    nx: int = 16
    ny1: int = 16
    ny2: int = 16
    x_periodic: bool = True
    y1_periodic: bool = True
    y2_periodic: bool = True

    def __post_init__(self):
        if not (self.lam >= 1.0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be a finite real >= 1, got {self.lam}")
        if not (2.0 <= self.alpha <= 4.0):
            raise ValueError(f"alpha must lie in [2, 4], got {self.alpha}")
        for name in ("nx", "ny1", "ny2"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n}")

    @property
    def nu(self) -> float:
        return self.lam ** (2.0 / (self.alpha + 2.0))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny1, self.ny2)

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (TWO_PI * self.nu, TWO_PI * self.lam, TWO_PI * self.lam)

    @property
    def volume(self) -> float:
        lx, ly1, ly2 = self.lengths
        return lx * ly1 * ly2

    @property
    def cell_volume(self) -> float:
        return self.volume / (self.nx * self.ny1 * self.ny2)

    @property
    def dual_weight(self) -> float:
        """Measure of one dual lattice point: 1/(nu * lam**2)."""
        return 1.0 / (self.nu * self.lam**2)

    @property
    def periodic_transverse_dims(self) -> int:
        return int(self.y1_periodic) + int(self.y2_periodic)

    def with_(self, **changes) -> "DomainSpec":
        params = {k: getattr(self, k) for k in self.__dataclass_fields__}
        params.update(changes)
        return DomainSpec(**params)


def _odd_safe(k: np.ndarray, n: int) -> np.ndarray:
    # The Nyquist mode is its own Hermitian partner; odd symbols vanish there.
    k = k.copy()
    k[n // 2] = 0.0
    return k


@dataclass(frozen=True, eq=False)
class Grid:
    """Precomputed dual-lattice tables for a :class:`DomainSpec`.

    Wavenumber arrays are stored in broadcastable shapes ``(nx,1,1)``,
    ``(1,ny1,1)`` and ``(1,1,ny2)``.  The ``*_odd`` variants have the Nyquist
    entry zeroed and are used for symbols that are odd in frequency.
    """

    spec: DomainSpec
    xi: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    xi_odd: np.ndarray
    eta1_odd: np.ndarray
    eta2_odd: np.ndarray
    index: tuple = field(repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.spec.shape

    @functools.cached_property
    def eta_sq(self) -> np.ndarray:
        return self.eta1**2 + self.eta2**2

    @functools.cached_property
    def eta_abs(self) -> np.ndarray:
        return np.sqrt(self.eta_sq)

    @functools.cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.xi**2 + self.eta_sq)

    @functools.cached_property
    def xi_max(self) -> float:
        """Largest |xi| carried by a non-Nyquist lattice point."""
        return (self.spec.nx // 2 - 1) / self.spec.nu

    @functools.cached_property
    def eta_max(self) -> float:
        return (min(self.spec.ny1, self.spec.ny2) // 2 - 1) / self.spec.lam

    @functools.cached_property
    def dealias_mask(self) -> np.ndarray:
        jx, jy1, jy2 = self.index
        nx, ny1, ny2 = self.shape
        keep = (
            (3 * np.abs(jx) < nx)
            & (3 * np.abs(jy1) < ny1)
            & (3 * np.abs(jy2) < ny2)
        )
        return keep.astype(float)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical sample points, broadcastable like the wavenumbers."""
        lx, ly1, ly2 = self.spec.lengths
        nx, ny1, ny2 = self.shape
        x = (np.arange(nx) * lx / nx).reshape(-1, 1, 1)
        y1 = (np.arange(ny1) * ly1 / ny1).reshape(1, -1, 1)
        y2 = (np.arange(ny2) * ly2 / ny2).reshape(1, 1, -1)
        return x, y1, y2

    def inhomogeneous_levels(self) -> list[int]:
        """Dyadic N = 1, 2, 4, ... whose LP pieces sum to the identity on this grid."""
        levels = [1]
        xmax = self.spec.nx / (2 * self.spec.nu)
        while levels[-1] < xmax:
            levels.append(2 * levels[-1])
        return levels


@functools.lru_cache(maxsize=64)
def build_grid(spec: DomainSpec) -> Grid:
    """Return the (cached) dual-lattice tables for ``spec``."""
    nx, ny1, ny2 = spec.shape
    jx = np.fft.fftfreq(nx, 1.0 / nx)
    jy1 = np.fft.fftfreq(ny1, 1.0 / ny1)
    jy2 = np.fft.fftfreq(ny2, 1.0 / ny2)
    xi = jx / spec.nu
    e1 = jy1 / spec.lam
    e2 = jy2 / spec.lam
    arrays = [
        a.reshape(shape)
        for a, shape in (
            (xi, (-1, 1, 1)),
            (e1, (1, -1, 1)),
            (e2, (1, 1, -1)),
            (_odd_safe(xi, nx), (-1, 1, 1)),
            (_odd_safe(e1, ny1), (1, -1, 1)),
            (_odd_safe(e2, ny2), (1, 1, -1)),
        )
    ]
    for a in arrays:
        a.setflags(write=False)
    index = (jx.reshape(-1, 1, 1), jy1.reshape(1, -1, 1), jy2.reshape(1, 1, -1))
    return Grid(spec, *arrays, index=index)


# ---------------------------------------------------------------------------
# Spectral fields and transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a field on ``domain`` (full FFT layout)."""

    domain: DomainSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.domain.shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match grid {self.domain.shape}"
            )
        if c is self.coeffs:
            c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def grid(self) -> Grid:
        return build_grid(self.domain)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.domain, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_domain(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_domain(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex) -> "SpectralField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def l2(self) -> float:
        """Physical L^2 norm, computed on the dual side."""
        return dual_l2(self)

    def is_mean_zero(self, rtol: float = 1e-13) -> bool:
        scale = float(np.max(np.abs(self.coeffs), initial=0.0))
        return float(np.max(np.abs(self.coeffs[0]))) <= rtol * scale

    def hermitian_defect(self) -> float:
        """max |c(-k) - conj c(k)| relative to max |c|; 0 for real fields."""
        c = self.coeffs
        mirrored = np.roll(np.flip(c, axis=(0, 1, 2)), 1, axis=(0, 1, 2))
        scale = float(np.max(np.abs(c), initial=0.0)) or 1.0
        return float(np.max(np.abs(mirrored - np.conj(c)))) / scale


def _check_same_domain(a: SpectralField, b: SpectralField) -> None:
    if a.domain != b.domain:
        raise ValueError("fields live on different domains")


def to_spectral(domain: DomainSpec, values: np.ndarray) -> SpectralField:
    """Forward transform of physical samples on ``domain``."""
    values = np.asarray(values)
    if values.shape != domain.shape:
        raise ValueError(f"sample shape {values.shape} does not match grid {domain.shape}")
    return SpectralField(domain, fftn(values) * domain.cell_volume)


def to_physical(f: SpectralField, real: bool = True) -> np.ndarray:
    """Inverse transform; returns real samples unless ``real=False``."""
    values = ifftn(f.coeffs) / f.domain.cell_volume
    return values.real if real else values


def physical_l2(domain: DomainSpec, values: np.ndarray) -> float:
    return math.sqrt(domain.cell_volume * float(np.sum(np.abs(values) ** 2)))


def dual_l2(f: SpectralField) -> float:
    """(2 pi)^{-3/2} times the dual-lattice L^2 norm of the coefficients."""
    s = f.domain.dual_weight * float(np.sum(np.abs(f.coeffs) ** 2))
    return math.sqrt(s) / TWO_PI**1.5


def zeros(domain: DomainSpec) -> SpectralField:
    return SpectralField(domain, np.zeros(domain.shape, dtype=complex))


def project_mean_zero(f: SpectralField) -> SpectralField:
    """Remove the x-average: zero every coefficient with xi = 0."""
    c = f.coeffs.copy()
    c[0] = 0.0
    return f.with_coeffs(c)


# ---------------------------------------------------------------------------
# Frequency masks
# ---------------------------------------------------------------------------


def _psi(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_bump(r) -> np.ndarray:
    """C-infinity even bump: 1 on [-1, 1], 0 outside (-2, 2), monotone between."""
    r = np.abs(np.asarray(r, dtype=float))
    t = np.clip(r - 1.0, 0.0, 1.0)
    a = _psi(t)
    b = _psi(1.0 - t)
    return 1.0 - a / (a + b)


def lp_symbol(xi, N: float, homogeneous: bool = False) -> np.ndarray:
    """Littlewood-Paley multiplier phi_N(xi).

    Inhomogeneous family (N = 1, 2, 4, ...): phi_1 = bump, phi_N(xi) =
    bump(xi/N) - bump(2 xi/N).  The homogeneous family uses the difference
    form for every dyadic N, including N < 1.
    """
    xi = np.asarray(xi, dtype=float)
    if N == 1 and not homogeneous:
        return smooth_bump(xi)
    return smooth_bump(xi / N) - smooth_bump(2.0 * xi / N)


def galerkin_symbol(k_abs, M: int) -> np.ndarray:
    """sum_{K=1/M}^{M} chi(k/K) with chi(k) = bump(k/2) - bump(k), telescoped.

    Equals 1 for 2/M <= |k| <= 2M and vanishes for |k| <= 1/M or |k| >= 4M.
    """
    k_abs = np.asarray(k_abs, dtype=float)
    return smooth_bump(k_abs / (2.0 * M)) - smooth_bump(k_abs * M)


def _is_dyadic(v: float) -> bool:
    if v <= 0:
        return False
    e = math.log2(v)
    return abs(e - round(e)) < 1e-12


@dataclass(frozen=True)
class BandMask:
    """Frequency-space mask description.

    kind is one of ``"lp"`` (inhomogeneous P_N), ``"lp_hom"`` (homogeneous
    P_N, any dyadic N), ``"joint"`` (P_{N,K}: P_N in xi times inhomogeneous
    phi_K(|eta|)), ``"galerkin"`` (P~_M) or ``"dealias"`` (2/3 rule).
    """

    kind: str
    N: Optional[float] = None
    K: Optional[float] = None
    M: Optional[int] = None

    def __post_init__(self):
        kinds = ("lp", "lp_hom", "joint", "galerkin", "dealias")
        if self.kind not in kinds:
            raise ValueError(f"unknown mask kind {self.kind!r}; expected one of {kinds}")
        if self.kind in ("lp", "joint"):
            if self.N is None or not _is_dyadic(self.N) or self.N < 1:
                raise ValueError(f"{self.kind} mask needs dyadic N >= 1, got {self.N}")
        if self.kind == "lp_hom" and (self.N is None or not _is_dyadic(self.N)):
            raise ValueError(f"homogeneous LP mask needs dyadic N, got {self.N}")
        if self.kind == "joint" and (self.K is None or not _is_dyadic(self.K) or self.K < 1):
            raise ValueError(f"joint mask needs dyadic K >= 1, got {self.K}")
        if self.kind == "galerkin" and (self.M is None or not _is_dyadic(self.M) or self.M < 2):
            raise ValueError(f"Galerkin mask needs dyadic M >= 2, got {self.M}")


_mask_cache: dict = {}


def mask_symbol(grid: Grid, mask: BandMask) -> np.ndarray:
    """Real multiplier array for ``mask`` on ``grid`` (evaluated once per grid)."""
    key = (grid.spec, mask)
    hit = _mask_cache.get(key)
    if hit is not None:
        return hit
    if mask.kind == "lp":
        sym = lp_symbol(grid.xi, mask.N)
    elif mask.kind == "lp_hom":
        sym = lp_symbol(grid.xi, mask.N, homogeneous=True)
    elif mask.kind == "joint":
        sym = lp_symbol(grid.xi, mask.N) * lp_symbol(grid.eta_abs, mask.K)
    elif mask.kind == "galerkin":
        sym = galerkin_symbol(grid.k_abs, mask.M)
    else:
        sym = grid.dealias_mask
    sym = np.broadcast_to(sym, grid.shape).astype(float)
    sym.setflags(write=False)
    if len(_mask_cache) > 256:
        _mask_cache.clear()
    _mask_cache[key] = sym
    return sym


def band_project(f: SpectralField, mask: BandMask) -> SpectralField:
    """Pointwise multiplication of the coefficients by the mask symbol."""
    return f.with_coeffs(f.coeffs * mask_symbol(f.grid, mask))


# ---------------------------------------------------------------------------
# Random band-limited data
# ---------------------------------------------------------------------------


def band_support(grid: Grid, N: float, M: Optional[float] = None) -> np.ndarray:
    """Boolean support |xi| in [N/2, 2N] (and |eta| in [M/2, 2M] if M given)."""
    sup = (np.abs(grid.xi) >= N / 2) & (np.abs(grid.xi) <= 2 * N)
    if M is not None:
        sup = sup & (grid.eta_abs >= M / 2) & (grid.eta_abs <= 2 * M)
    return np.broadcast_to(sup, grid.shape)


def random_band_field(
    domain: DomainSpec,
    N: float,
    M: Optional[float] = None,
    seed: int = 0,
) -> SpectralField:
    """Real Gaussian random field with |xi| ~ N (and |eta| ~ M), unit L^2 norm."""
    grid = build_grid(domain)
    if 2 * N > grid.xi_max or N <= 0:
        raise ValueError(f"band N={N} not representable (max |xi| = {grid.xi_max:.4g})")
    if M is not None and (2 * M > grid.eta_max or M <= 0):
        raise ValueError(f"band M={M} not representable (max |eta| = {grid.eta_max:.4g})")
    support = band_support(grid, N, M)
    if not support.any():
        raise ValueError(f"band (N={N}, M={M}) contains no lattice points")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(domain.shape) + 1j * rng.standard_normal(domain.shape)
    c = np.where(support, z, 0.0)
    # Hermitian symmetrisation keeps the (symmetric) support.
    values = ifftn(c).real
    f = to_spectral(domain, values)
    f = f.with_coeffs(np.where(support, f.coeffs, 0.0))
    return f * (1.0 / f.l2())
