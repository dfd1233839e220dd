"""Time integration of the truncated flow and the second Picard iterate.

The equation in Fourier variables reads

    d/dt u_hat = i omega u_hat + i xi P (P u)^2 hat,

with P the product of the 2/3 dealiasing mask and (optionally) the Galerkin
cutoff.  The linear part is integrated exactly through an integrating factor;
the nonlinear part by classical RK4.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .dispersion import DispersionParams, omega_symbol, propagate
from .norms import E, energy, norm, pad_coeffs
from .spectral import (
    BandMask,
    SpectralField,
    fftn,
    ifftn,
    mask_symbol,
    to_physical,
)


class BlowUpError(RuntimeError):
    """The solution left the range where the run is meaningful."""


class QuadratureError(RuntimeError):
    """Time quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative change {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class SolverConfig:
    """Integrator settings.

    dt_policy ``"fixed"`` uses ``dt``; ``"freq_scaled"`` uses
    ``c * Nmax**-(2 - alpha/2)`` where Nmax is the largest dyadic x-band
    holding at least ``mass_threshold`` of the squared L^2 norm.  Either way
    the step is shortened so that an integer number of steps lands on t_end.
    """

    alpha: float = 2.0
    galerkin_M: Optional[int] = None
    dt_policy: str = "fixed"
    dt: float = 1e-3
    c: float = 0.1
    t_end: float = 0.1
    diag_every: int = 10
    es_orders: tuple = (1.0,)
    nonlinear: bool = True
    blowup_factor: float = 1e6
    mass_threshold: float = 1e-12

    def __post_init__(self):
        DispersionParams(self.alpha)
        if self.dt_policy not in ("fixed", "freq_scaled"):
            raise ValueError(f"unknown dt_policy {self.dt_policy!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if int(self.diag_every) != self.diag_every or self.diag_every < 1:
            raise ValueError("diag_every must be a positive integer")
        if self.galerkin_M is not None:
            BandMask("galerkin", M=self.galerkin_M)
        object.__setattr__(self, "es_orders", tuple(float(s) for s in self.es_orders))


def nonlinear_mask(f: SpectralField, M: Optional[int] = None) -> np.ndarray:
    """Dealiasing mask, times the Galerkin cutoff when M is given."""
    grid = f.grid
    m = mask_symbol(grid, BandMask("dealias"))
    if M is not None:
        m = m * mask_symbol(grid, BandMask("galerkin", M=M))
    return m


def _rhs_array(coeffs: np.ndarray, f: SpectralField, mask: np.ndarray) -> np.ndarray:
    d = f.domain
    v = ifftn(mask * coeffs).real / d.cell_volume
    sq = fftn(v * v) * d.cell_volume
    out = (1j * f.grid.xi_odd) * mask * sq
    out[0] = 0.0
    return out


def rhs_nonlinear(u: SpectralField, M: Optional[int] = None) -> SpectralField:
    """P d_x (P u)^2 with P = dealias (x Galerkin cutoff)."""
    if not u.is_mean_zero():
        raise ValueError("rhs_nonlinear needs a mean-zero field")
    return u.with_coeffs(_rhs_array(u.coeffs, u, nonlinear_mask(u, M)))


def _ifrk4(c: np.ndarray, dt: float, f: SpectralField, om: np.ndarray, mask, nonlinear: bool):
    e = np.exp(0.5j * dt * om)
    e2 = e * e
    if not nonlinear:
        return e2 * c
    nl = lambda a: _rhs_array(a, f, mask)  # noqa: E731
    k1 = nl(c)
    k2 = nl(e * (c + 0.5 * dt * k1))
    k3 = nl(e * c + 0.5 * dt * k2)
    k4 = nl(e2 * c + dt * e * k3)
    return e2 * c + (dt / 6.0) * (e2 * k1 + 2.0 * e * (k2 + k3) + k4)


def step_ifrk4(u: SpectralField, dt: float, cfg: SolverConfig) -> SpectralField:
    """One integrating-factor RK4 step of size ``dt``."""
    if not u.is_mean_zero():
        raise ValueError("step_ifrk4 needs a mean-zero field")
    om = omega_symbol(u.grid, cfg.alpha)
    mask = nonlinear_mask(u, cfg.galerkin_M)
    return u.with_coeffs(_ifrk4(u.coeffs, dt, u, om, mask, cfg.nonlinear))


# ---------------------------------------------------------------------------
# Diagnostics and the driver
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticSeries:
    t: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    es: dict = field(default_factory=dict)
    leak: list = field(default_factory=list)

    def append(self, t, l2, en, es, leak):
        if self.t and not t > self.t[-1]:
            raise ValueError("diagnostic times must be strictly increasing")
        self.t.append(float(t))
        self.l2.append(float(l2))
        self.energy.append(float(en))
        for k, v in es.items():
            self.es.setdefault(k, []).append(float(v))
        self.leak.append(float(leak))

    def __len__(self):
        return len(self.t)

    def relative_drift(self, name: str) -> float:
        vals = np.asarray(getattr(self, name))
        ref = abs(vals[0]) or 1.0
        return float(np.max(np.abs(vals - vals[0])) / ref)

    def records(self) -> Iterable[dict]:
        for i, t in enumerate(self.t):
            yield {
                "t": t,
                "l2": self.l2[i],
                "energy": self.energy[i],
                "es": {k: v[i] for k, v in self.es.items()},
                "leak": self.leak[i],
            }

    def to_ndjson(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def write_ndjson(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_ndjson())


def _diagnose(series, t, u: SpectralField, cfg, cutoff, dealias):
    es = {f"{s:g}": norm(u, E(s)) for s in cfg.es_orders}
    leak = float(np.max(np.abs(u.coeffs) * (1.0 - dealias), initial=0.0))
    series.append(t, u.l2(), energy(u, cfg.alpha, cutoff), es, leak)


def dominant_level(f: SpectralField, threshold: float = 1e-12) -> float:
    """Largest dyadic N whose x-band |xi| in [N/2, 2N) holds >= threshold of the mass."""
    g = f.grid
    w = np.sum(np.abs(f.coeffs) ** 2, axis=(1, 2))
    total = float(np.sum(w))
    if total == 0:
        return 1.0
    axi = np.abs(g.xi.ravel())
    best = 1.0
    for N in g.inhomogeneous_levels():
        lo = 0.0 if N == 1 else N / 2
        band = (axi >= lo) & (axi < 2 * N)
        if np.sum(w[band]) >= threshold * total:
            best = float(N)
    return best


def step_size(phi: SpectralField, cfg: SolverConfig) -> float:
    if cfg.dt_policy == "fixed":
        return cfg.dt
    N = dominant_level(phi, cfg.mass_threshold)
    return cfg.c * DispersionParams(cfg.alpha).time_scale(N)


def simulate(phi: SpectralField, cfg: SolverConfig):
    """Advance ``phi`` to ``cfg.t_end``; returns (final state, DiagnosticSeries)."""
    if not phi.is_mean_zero():
        raise ValueError("simulate needs mean-zero initial data")
    if phi.hermitian_defect() > 1e-12:
        raise ValueError("simulate needs real initial data")
    dt_target = step_size(phi, cfg)
    nsteps = max(1, math.ceil(cfg.t_end / dt_target - 1e-9)) if cfg.t_end > 0 else 0
    dt = cfg.t_end / nsteps if nsteps else 0.0

    grid = phi.grid
    om = omega_symbol(grid, cfg.alpha)
    mask = nonlinear_mask(phi, cfg.galerkin_M)
    dealias = mask_symbol(grid, BandMask("dealias"))
    cutoff = mask if cfg.nonlinear else None

    series = DiagnosticSeries()
    _diagnose(series, 0.0, phi, cfg, cutoff, dealias)
    sup0 = float(np.max(np.abs(to_physical(phi)))) or 1.0
    c = phi.coeffs
    u = phi
    for n in range(1, nsteps + 1):
        c = _ifrk4(c, dt, phi, om, mask, cfg.nonlinear)
        if cfg.nonlinear:
            sup = float(np.max(np.abs(ifftn(c).real))) / phi.domain.cell_volume
            if not math.isfinite(sup) or sup > cfg.blowup_factor * sup0:
                raise BlowUpError(
                    f"sup norm {sup:.3e} exceeds {cfg.blowup_factor:g} x initial at t={n * dt:.4g}"
                )
        if n % cfg.diag_every == 0 or n == nsteps:
            u = phi.with_coeffs(c)
            _diagnose(series, n * dt, u, cfg, cutoff, dealias)
    return phi.with_coeffs(c), series


# ---------------------------------------------------------------------------
# Second Picard iterate
# ---------------------------------------------------------------------------


def square_coeffs(f: SpectralField, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of u^2 on the native lattice, free of aliasing."""
    d = f.domain
    big = pad_coeffs(coeffs)
    cell = d.cell_volume / 8.0
    v = ifftn(big).real / cell
    sq = fftn(v * v) * cell
    nx, ny1, ny2 = d.shape
    ix = np.r_[0 : nx // 2 + 1, 2 * nx - nx // 2 + 1 : 2 * nx]
    iy1 = np.r_[0 : ny1 // 2 + 1, 2 * ny1 - ny1 // 2 + 1 : 2 * ny1]
    iy2 = np.r_[0 : ny2 // 2 + 1, 2 * ny2 - ny2 // 2 + 1 : 2 * ny2]
    return sq[np.ix_(ix, iy1, iy2)]


def _duhamel_integrand(phi: SpectralField, om: np.ndarray, s: float) -> np.ndarray:
    u1 = phi.coeffs * np.exp(1j * s * om)
    nl = 1j * phi.grid.xi_odd * square_coeffs(phi, u1)
    nl[0] = 0.0
    return np.exp(-1j * s * om) * nl


def _simpson(values: list, h: float) -> np.ndarray:
    acc = values[0] + values[-1]
    acc = acc + 4.0 * sum(values[1:-1:2]) + 2.0 * sum(values[2:-1:2])
    return acc * (h / 3.0)


def picard_second(
    phi: SpectralField,
    t: float,
    alpha: float,
    tol: float = 1e-8,
    nodes: int = 65,
    max_nodes: int = 16385,
) -> SpectralField:
    """u_2(t) = int_0^t S(t - s) d_x (S(s) phi)^2 ds by refined composite Simpson."""
    if not phi.is_mean_zero():
        raise ValueError("picard_second needs a mean-zero field")
    if t == 0 or not np.any(phi.coeffs):
        return phi.with_coeffs(np.zeros(phi.domain.shape, dtype=complex))
    if nodes < 65 or nodes % 2 == 0:
        raise ValueError("nodes must be odd and >= 65")
    om = omega_symbol(phi.grid, alpha)
    n = nodes
    ts = np.linspace(0.0, t, n)
    vals = [_duhamel_integrand(phi, om, s) for s in ts]
    est = _simpson(vals, t / (n - 1))
    change = math.inf
    while n < max_nodes:
        m = 2 * n - 1
        mids = (ts[:-1] + ts[1:]) / 2
        new = [_duhamel_integrand(phi, om, s) for s in mids]
        merged = [None] * m
        merged[::2] = vals
        merged[1::2] = new
        vals, n = merged, m
        ts = np.linspace(0.0, t, n)
        nxt = _simpson(vals, t / (n - 1))
        scale = float(np.max(np.abs(nxt))) or 1.0
        change = float(np.max(np.abs(nxt - est))) / scale
        est = nxt
        if change < tol:
            return propagate(phi.with_coeffs(est), t, alpha)
    raise QuadratureError(f"Simpson refinement stopped at {n} nodes", change)


__all__ = [
    "BlowUpError",
    "DiagnosticSeries",
    "QuadratureError",
    "SolverConfig",
    "dominant_level",
    "nonlinear_mask",
    "picard_second",
    "rhs_nonlinear",
    "simulate",
    "square_coeffs",
    "step_ifrk4",
    "step_size",
]
