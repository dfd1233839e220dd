"""Monte-Carlo benches for the linear L^4, bilinear transverse and Leibniz estimates.

Each bench draws seeded random data, evaluates both sides of an inequality
and reports the ratios together with log-log exponent fits.  Band-limited
data is stored on a small window of the dual lattice around its support;
products are evaluated exactly by zero-padded FFT convolution on that window,
so no grid covering the whole frequency range is ever built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .dispersion import DEFAULT_SMALLNESS, kdv_resonance, omega, resonance
from .norms import pad_coeffs
from .spectral import TWO_PI, DomainSpec, build_grid, fftn, ifftn, lp_symbol, to_spectral


# ---------------------------------------------------------------------------
# Reports and fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    param: str
    exponent: float
    stderr: float
    ci: tuple
    levels: tuple
    residual: float

    def as_dict(self) -> dict:
        return {
            "param": self.param,
            "exponent": self.exponent,
            "stderr": self.stderr,
            "ci": list(self.ci),
            "levels": list(self.levels),
            "residual": self.residual,
        }


def fit_exponent(param: str, levels: Sequence[float], values: Sequence[float], conf: float = 0.95) -> ExponentFit:
    """Least-squares slope of log(values) against log(levels)."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(levels) < 4:
        raise ValueError("exponent fits need at least 4 dyadic levels")
    if np.any(values <= 0):
        raise ValueError("values must be positive for a log-log fit")
    x, y = np.log(levels), np.log(values)
    res = stats.linregress(x, y)
    q = stats.t.ppf(0.5 + conf / 2.0, len(x) - 2)
    resid = y - (res.intercept + res.slope * x)
    return ExponentFit(
        param=param,
        exponent=float(res.slope),
        stderr=float(res.stderr),
        ci=(float(res.slope - q * res.stderr), float(res.slope + q * res.stderr)),
        levels=tuple(float(v) for v in levels),
        residual=float(np.sqrt(np.mean(resid**2))),
    )


@dataclass
class BenchReport:
    """Per-sample ratios LHS/RHS plus exponent fits."""

    inequality: str
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    @property
    def samples(self) -> int:
        return len(self.records)

    @property
    def seeds(self) -> list:
        return [r["seed"] for r in self.records]

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r["ratio"] for r in self.records])

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if self.records else math.nan

    def extend(self, other: "BenchReport") -> None:
        self.records.extend(other.records)
        self.skipped.extend(other.skipped)

    def level_max(self, param: str, key: str) -> tuple:
        """(levels, max of ``key`` over samples at each level of ``param``)."""
        groups: dict = {}
        for r in self.records:
            groups.setdefault(r[param], []).append(r[key])
        levels = sorted(groups)
        return levels, [max(groups[v]) for v in levels]

    def add_fit(self, param: str, key: str = "lhs_unit") -> ExponentFit:
        levels, vals = self.level_max(param, key)
        fit = fit_exponent(param, levels, vals)
        self.fits[param] = fit
        return fit

    def to_csv(self) -> str:
        if not self.records:
            return "inequality,seed,lhs,rhs,ratio\n"
        params = [k for k in self.records[0] if k not in ("seed", "lhs", "rhs", "ratio")]
        cols = ["inequality", *params, "seed", "lhs", "rhs", "ratio"]
        lines = [",".join(cols)]
        for r in self.records:
            row = [self.inequality] + [_fmt(r[c]) for c in cols[1:]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "inequality": self.inequality,
            "samples": self.samples,
            "max_ratio": self.max_ratio,
            "fits": {k: v.as_dict() for k, v in sorted(self.fits.items())},
            "skipped": self.skipped,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# Lattice windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    """Rectangular block of dual lattice points of ``domain``."""

    domain: DomainSpec
    jx: np.ndarray
    jy1: np.ndarray
    jy2: np.ndarray

    @property
    def shape(self) -> tuple:
        return (len(self.jx), len(self.jy1), len(self.jy2))

    @property
    def xi(self) -> np.ndarray:
        return (self.jx / self.domain.nu)[:, None, None]

    @property
    def eta(self) -> np.ndarray:
        lam = self.domain.lam
        e1 = np.broadcast_to((self.jy1 / lam)[None, :, None], self.shape)
        e2 = np.broadcast_to((self.jy2 / lam)[None, None, :], self.shape)
        return np.stack([e1, e2], axis=-1)

    def omega(self, alpha: float) -> np.ndarray:
        xi = np.broadcast_to(self.xi, self.shape)
        return omega(alpha, xi, self.eta)

    def points(self) -> np.ndarray:
        xi = np.broadcast_to(self.xi, self.shape)
        return np.concatenate([xi[..., None], self.eta], axis=-1).reshape(-1, 3)


def _index_range(lo: float, width: float, spacing: float) -> np.ndarray:
    start = math.ceil(lo / spacing - 1e-9)
    stop = math.ceil((lo + width) / spacing - 1e-9)
    return np.arange(start, stop)


def window(domain: DomainSpec, xi_lo: float, K: float, eta_lo: Sequence[float], M: float) -> Window:
    """Lattice points in [xi_lo, xi_lo + K) x Q, Q the half-open cube at eta_lo of side M."""
    jx = _index_range(xi_lo, K, 1.0 / domain.nu)
    jy1 = _index_range(eta_lo[0], M, 1.0 / domain.lam)
    jy2 = _index_range(eta_lo[1], M, 1.0 / domain.lam)
    if not (len(jx) and len(jy1) and len(jy2)):
        raise ValueError(f"band (K={K}, M={M}) is below the lattice resolution")
    if np.any(jx == 0):
        raise ValueError("band touches xi = 0")
    return Window(domain, jx, jy1, jy2)


def _sample_coeffs(shape, rng: np.random.Generator, coherent: bool) -> np.ndarray:
    if coherent:
        return rng.uniform(0.5, 1.0, size=shape).astype(complex)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _phys_scale(domain: DomainSpec) -> float:
    # u(x) = sum_k c_k e^{ikx} with c_k = (2 pi)^{-3} * dual_weight * f_hat(k)
    return domain.dual_weight / TWO_PI**3


def l2_of_coeffs(domain: DomainSpec, c: np.ndarray) -> float:
    """L^2 norm on the torus of sum_k c_k e^{ikx}."""
    return math.sqrt(domain.volume * float(np.sum(np.abs(c) ** 2)))


def l4_power(domain: DomainSpec, c: np.ndarray) -> float:
    """int |sum_k c_k e^{ikx}|^4 over the torus, exactly."""
    shape = tuple(2 * n for n in c.shape)
    big = np.zeros(shape, dtype=complex)
    big[: c.shape[0], : c.shape[1], : c.shape[2]] = c
    w = ifftn(big) * float(np.prod(shape))
    return domain.volume * float(np.mean(np.abs(w) ** 4))


def _convolve(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    shape = tuple(a + b - 1 for a, b in zip(c1.shape, c2.shape))
    fshape = tuple(int(2 ** math.ceil(math.log2(s))) for s in shape)
    out = ifftn(fftn(_embed(c1, fshape)) * fftn(_embed(c2, fshape)))
    return out[: shape[0], : shape[1], : shape[2]]


def _embed(c, shape):
    big = np.zeros(shape, dtype=complex)
    big[: c.shape[0], : c.shape[1], : c.shape[2]] = c
    return big


# ---------------------------------------------------------------------------
# Linear L^4 bench
# ---------------------------------------------------------------------------


def l4_constant(alpha: float, N: float, M: float, lam: float, eps: float = 0.01, d2: int = 2) -> float:
    """C(N, M): M^{1/2} for M <= 1, lam^eps (N^{1/4} v 1) M^eps otherwise (eps only if d2 = 2)."""
    if M <= 1:
        return math.sqrt(M)
    e = eps if d2 == 2 else 0.0
    return lam**e * max(N**0.25, 1.0) * M**e


def _bench_domain(lam: float, alpha: float) -> DomainSpec:
    # Grid sizes only record the geometry; windows never use the full grid.
    return DomainSpec(lam=lam, alpha=alpha, nx=8, ny1=8, ny2=8)


def spacetime_l4(alpha: float, win: Window, a: np.ndarray, n_t: Optional[int] = None) -> float:
    """||S(t) u0||_{L^4(torus x [0,1])} for coefficients ``a`` on ``win``."""
    d = win.domain
    c = a * _phys_scale(d)
    om = win.omega(alpha)
    spread = float(np.max(om) - np.min(om))
    if n_t is None:
        n_t = max(64, int(math.ceil(0.6 * 2 * spread)) + 16)
    x, w = np.polynomial.legendre.leggauss(n_t)
    ts, ws = 0.5 * (x + 1.0), 0.5 * w
    om0 = 0.5 * (np.max(om) + np.min(om))
    total = 0.0
    for t, wt in zip(ts, ws):
        total += wt * l4_power(d, c * np.exp(1j * t * (om - om0)))
    return total**0.25


def bench_l4_strichartz(
    alpha: float,
    Ns: Sequence[float],
    Ks: Sequence[float],
    Ms: Sequence[float],
    samples: int = 8,
    lam: float = 16.0,
    eps: float = 0.01,
    seed: int = 0,
) -> BenchReport:
    """Ratio ||S(t)u0||_{L^4} / (K^{1/4} C(N,M) ||u0||) over a (N, K, M) sweep.

    u0 is supported in [N, N+K) x Q_M with Q_M a cube of side M at a random
    position; even samples are coherent packets, odd samples Gaussian.
    """
    d = _bench_domain(lam, alpha)
    report = BenchReport("l4_strichartz")
    for N in Ns:
        for K in Ks:
            if K > N:
                report.skipped.append({"N": N, "K": K, "reason": "K > N"})
                continue
            for M in Ms:
                for s in range(samples):
                    sd = _cell_seed(seed, N, K, M, s)
                    rng = np.random.default_rng(sd)
                    eta_lo = rng.uniform(-1.0, 1.0, size=2) * max(M, 1.0) - M / 2
                    win = window(d, N, K, eta_lo, M)
                    a = _sample_coeffs(win.shape, rng, coherent=(s % 2 == 0))
                    lhs = spacetime_l4(alpha, win, a)
                    norm0 = l2_of_coeffs(d, a * _phys_scale(d))
                    rhs = K**0.25 * l4_constant(alpha, N, M, lam, eps, d.periodic_transverse_dims) * norm0
                    report.records.append(
                        {
                            "alpha": alpha,
                            "lam": lam,
                            "N": N,
                            "K": K,
                            "M": M,
                            "seed": sd,
                            "lhs": lhs,
                            "rhs": rhs,
                            "ratio": lhs / rhs,
                            "lhs_unit": lhs / norm0,
                        }
                    )
    return report


def _cell_seed(seed: int, *parts) -> int:
    key = [int(seed)] + [int(round(math.log2(p) + 64)) if p > 0 else 0 for p in parts[:-1]] + [int(parts[-1])]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Bilinear transverse bench
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BilinearBand:
    """x-frequencies [N, N + width), transverse cube of side M, modulation L."""

    N: float
    M: float
    L: float = 1.0
    width: Optional[float] = None

    @property
    def K(self) -> float:
        return self.N / 2 if self.width is None else self.width


def resonant_eta(alpha: float, xi1: float, xi2: float) -> float:
    """eta2 on the first axis making (xi1, 0), (xi2, (eta2, 0)) exactly resonant."""
    kdv = float(kdv_resonance(alpha, xi1, xi2))
    return xi2 * math.sqrt(kdv * (xi1 + xi2) / (xi1 * xi2))


def _pair_resonance(alpha: float, w1: Window, w2: Window, chunk: int = 1 << 22):
    """(max |Omega|/|Omega_KdV|, spread of Omega) over all lattice pairs, in chunks."""
    p1, p2 = w1.points(), w2.points()
    rows = max(1, chunk // len(p2))
    worst, lo, hi = 0.0, math.inf, -math.inf
    for s in range(0, len(p1), rows):
        q = p1[s : s + rows]
        xi1, xi2 = q[:, None, 0], p2[None, :, 0]
        om = resonance(alpha, xi1, q[:, None, 1:], xi2, p2[None, :, 1:])
        kdv = kdv_resonance(alpha, xi1, xi2)
        worst = max(worst, float(np.max(np.abs(om) / np.abs(kdv))))
        lo, hi = min(lo, float(np.min(om))), max(hi, float(np.max(om)))
    return worst, hi - lo


def bilinear_sample(alpha: float, w1: Window, a1, L1: float, w2: Window, a2, L2: float, N: float, spread: float):
    """||P_N(u1 u2)||_{L^2_{x,y,t}} and ||u1||, ||u2|| for Gaussian-windowed free waves."""
    d = w1.domain
    s = _phys_scale(d)
    c1, c2 = a1 * s, a2 * s
    om1, om2 = w1.omega(alpha), w2.omega(alpha)
    o1 = 0.5 * (om1.max() + om1.min())
    o2 = 0.5 * (om2.max() + om2.min())
    xi_out = (w1.jx[0] + w2.jx[0] + np.arange(len(w1.jx) + len(w2.jx) - 1)) / d.nu
    sym = lp_symbol(xi_out, N, homogeneous=True)[:, None, None] ** 2
    a = L1 * L1 + L2 * L2
    h = TWO_PI / (spread + 20.0 * math.sqrt(a))
    T = math.sqrt(80.0 / a)
    ts = np.arange(-math.ceil(T / h), math.ceil(T / h) + 1) * h
    total = 0.0
    for t in ts:
        g = math.exp(-0.5 * a * t * t)
        prod = _convolve(c1 * np.exp(1j * t * (om1 - o1)), c2 * np.exp(1j * t * (om2 - o2)))
        total += g * g * float(np.sum(sym * np.abs(prod) ** 2))
    lhs = math.sqrt(d.volume * h * total)
    n1 = l2_of_coeffs(d, c1) * (math.sqrt(math.pi) / L1) ** 0.5
    n2 = l2_of_coeffs(d, c2) * (math.sqrt(math.pi) / L2) ** 0.5
    return lhs, n1, n2


def bench_bilinear_transverse(
    alpha: float,
    band1: BilinearBand,
    band2: BilinearBand,
    samples: int = 4,
    lam: float = 64.0,
    smallness: float = DEFAULT_SMALLNESS,
    seed: int = 0,
) -> BenchReport:
    """Ratio ||P_N(u1 u2)|| / RHS for resonant Gaussian-windowed wave packets.

    u1 sits at eta ~ 0, u2 at the transverse frequency that makes the
    centres of the two supports exactly resonant.  The cell is skipped if
    any pair of lattice points in the supports violates the resonance
    condition |Omega| < smallness |Omega_KdV|.
    """
    d = _bench_domain(lam, alpha)
    report = BenchReport("bilinear_transverse")
    lo, hi = sorted([band1, band2], key=lambda b: b.N)
    x1c, x2c = lo.N + lo.K / 2, hi.N + hi.K / 2
    e2 = resonant_eta(alpha, x1c, x2c)
    w1 = window(d, lo.N, lo.K, (-lo.M / 2, -lo.M / 2), lo.M)
    w2 = window(d, hi.N, hi.K, (e2 - hi.M / 2, -hi.M / 2), hi.M)
    worst, spread = _pair_resonance(alpha, w1, w2)
    params = {"alpha": alpha, "lam": lam, "N1": lo.N, "M1": lo.M, "L1": lo.L, "N2": hi.N, "M2": hi.M, "L2": hi.L}
    if worst >= smallness:
        report.skipped.append({**params, "reason": f"non-resonant support (max |Omega|/|Omega_KdV| = {worst:.3g})"})
        return report
    N = 2.0 ** round(math.log2(x1c + x2c))
    d2 = d.periodic_transverse_dims
    Nmin, Mmin = lo.N, min(lo.M, hi.M)
    Lmin, Lmax = min(lo.L, hi.L), max(lo.L, hi.L)
    const = math.sqrt(Mmin * Nmin * Lmin * (d2 + Lmax / N ** (alpha / 2)))
    trivial = math.sqrt(Nmin * Mmin**2 * Lmin)
    for s in range(samples):
        sd = _cell_seed(seed, lo.N, lo.M, hi.N, hi.M, s)
        rng = np.random.default_rng(sd)
        coherent = s % 2 == 0
        a1 = _sample_coeffs(w1.shape, rng, coherent)
        a2 = _sample_coeffs(w2.shape, rng, coherent)
        lhs, n1, n2 = bilinear_sample(alpha, w1, a1, lo.L, w2, a2, hi.L, N, spread)
        rhs = const * n1 * n2
        report.records.append(
            {
                **params,
                "N": N,
                "Nmin": Nmin,
                "Mmin": Mmin,
                "Lmin": Lmin,
                "max_resonance_ratio": worst,
                "tau_spread": spread,
                "trivial_ratio": lhs / (trivial * n1 * n2),
                "seed": sd,
                "lhs": lhs,
                "rhs": rhs,
                "ratio": lhs / rhs,
                "lhs_unit": lhs / (n1 * n2),
            }
        )
    return report


# ---------------------------------------------------------------------------
# Anisotropic Leibniz bench
# ---------------------------------------------------------------------------


def conjugate_exponent(p: float) -> float:
    """q with 1/p + 1/q = 1/2."""
    if not p > 2:
        raise ValueError("p must exceed 2")
    return math.inf if p == math.inf else 2.0 * p / (p - 2.0)


def mixed_norm(domain: DomainSpec, values: np.ndarray, px: float, py: float) -> float:
    """L^{px}_x L^{py}_y norm of grid samples (x on axis 0) by the rectangle rule."""
    lx, ly1, ly2 = domain.lengths
    n = values.shape
    dy = (ly1 / n[1]) * (ly2 / n[2])
    a = np.abs(values)
    if py == math.inf:
        inner = np.max(a, axis=(1, 2))
    else:
        inner = (np.sum(a**py, axis=(1, 2)) * dy) ** (1.0 / py)
    if px == math.inf:
        return float(np.max(inner))
    return float((np.sum(inner**px) * lx / n[0]) ** (1.0 / px))


def _fine_samples(domain: DomainSpec, coeffs: np.ndarray):
    big = pad_coeffs(coeffs)
    cell = domain.cell_volume / 8.0
    return ifftn(big).real / cell


def leibniz_sides(domain: DomainSpec, coeffs: np.ndarray, ax: float, by: float, delta: float, p: float):
    """(LHS, first RHS term, second RHS term) of the anisotropic Leibniz inequality."""
    q = conjugate_exponent(p)
    g = build_grid(domain)
    wx = (1 + g.xi**2) ** 0.5
    wy = (1 + g.eta_sq) ** 0.5
    fine = domain.with_(nx=2 * domain.nx, ny1=2 * domain.ny1, ny2=2 * domain.ny2)
    u = _fine_samples(domain, coeffs)
    usq = fftn(u * u) * fine.cell_volume
    gf = build_grid(fine)
    wsq = (1 + gf.xi**2) ** (ax / 2) * (1 + gf.eta_sq) ** (by / 2)
    lhs = math.sqrt(fine.dual_weight * float(np.sum((wsq * np.abs(usq)) ** 2))) / TWO_PI**1.5
    both = wx**ax * wy**by * coeffs
    first = math.sqrt(domain.dual_weight * float(np.sum(np.abs(both) ** 2))) / TWO_PI**1.5
    sup = float(np.max(np.abs(u)))
    dx = _fine_samples(domain, wx ** (ax + delta) * coeffs)
    dy = _fine_samples(domain, wy**by * coeffs)
    second = mixed_norm(fine, dx, 2.0, p) * mixed_norm(fine, dy, math.inf, q)
    return lhs, first * sup, second


def random_smooth_coeffs(domain: DomainSpec, decay: float, rng: np.random.Generator, coarse: Optional[DomainSpec] = None):
    """Real random field with coefficients ~ N(0,1) (1 + |k|^2)^{-decay/2}, Nyquist removed.

    If ``coarse`` is given, the spectrum is additionally truncated to the
    modes representable on that grid (and returned on ``coarse``'s lattice).
    """
    g = build_grid(domain)
    z = rng.standard_normal(domain.shape) + 1j * rng.standard_normal(domain.shape)
    env = (1 + g.k_abs**2) ** (-decay / 2)
    nyq = np.ones(domain.shape, dtype=bool)
    jx, jy1, jy2 = g.index
    nyq &= (np.abs(jx) < domain.nx // 2) & (np.abs(jy1) < domain.ny1 // 2) & (np.abs(jy2) < domain.ny2 // 2)
    c = np.where(nyq, z * env, 0.0)
    u = ifftn(c).real
    f = to_spectral(domain, u).coeffs * np.where(nyq, 1.0, 0.0)
    f[0, 0, 0] = 0.0
    if coarse is None:
        return f
    gc = build_grid(coarse)
    cx, c1, c2 = gc.index
    keep = (np.abs(cx) < coarse.nx // 2) & (np.abs(c1) < coarse.ny1 // 2) & (np.abs(c2) < coarse.ny2 // 2)
    out = f[np.ix_(cx.ravel().astype(int) % domain.nx, c1.ravel().astype(int) % domain.ny1, c2.ravel().astype(int) % domain.ny2)]
    return np.where(keep, out, 0.0)


def bench_leibniz(
    ax: float,
    by: float,
    delta: float,
    p: float,
    samples: int = 100,
    sizes: Sequence[int] = (16, 32),
    decay: float = 3.0,
    seed: int = 0,
) -> BenchReport:
    """Ratio LHS / (RHS1 + RHS2) on a pair of grids related by doubling.

    Sample ``s`` is drawn once on the finest grid and truncated to each
    coarser grid, so the same function is compared across resolutions.
    """
    if p not in (4, 6, 4.0, 6.0):
        raise ValueError("p must be 4 or 6")
    q = conjugate_exponent(p)
    report = BenchReport("leibniz")
    sizes = sorted(int(n) for n in sizes)
    fine = DomainSpec(nx=sizes[-1], ny1=sizes[-1], ny2=sizes[-1])
    for s in range(samples):
        sd = int(np.random.SeedSequence([seed, s]).generate_state(1)[0])
        for n in sizes:
            rng = np.random.default_rng(sd)
            dom = DomainSpec(nx=n, ny1=n, ny2=n)
            coeffs = random_smooth_coeffs(fine, decay, rng, None if n == fine.nx else dom)
            lhs, r1, r2 = leibniz_sides(dom, coeffs, ax, by, delta, p)
            report.records.append(
                {
                    "ax": ax,
                    "by": by,
                    "delta": delta,
                    "p": float(p),
                    "q": q,
                    "n": n,
                    "rhs1": r1,
                    "rhs2": r2,
                    "seed": sd,
                    "lhs": lhs,
                    "rhs": r1 + r2,
                    "ratio": lhs / (r1 + r2),
                }
            )
    return report


def max_ratio_by(report: BenchReport, param: str) -> dict:
    levels, vals = report.level_max(param, "ratio")
    return dict(zip(levels, vals))


__all__ = [
    "BenchReport",
    "BilinearBand",
    "ExponentFit",
    "bench_bilinear_transverse",
    "bench_l4_strichartz",
    "bench_leibniz",
    "fit_exponent",
    "l4_constant",
    "max_ratio_by",
    "resonant_eta",
    "spacetime_l4",
    "window",
]
