"""Norm inflation of the second Picard iterate for two-box initial data.

The data is a sum of normalised indicator functions of a low-frequency box
D1 (|xi| ~ beta) and a high-frequency box D2 (xi ~ N) in R^3, together with
their mirror images so that the field is real.  The boxes sit at
frequencies far beyond any FFT grid (eta ~ N^{1+alpha/2}), so the data is
kept as exact box geometry and every integral is done by tensor
Gauss-Legendre quadrature split at the kinks of the box intersections.

Norms in this module are continuum norms ``(int w^2 |f_hat|^2 dk)^{1/2}``
with w = <xi>^{s1} <eta>^{s2}; the overall constant of the bilinear term is
taken to be 1.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .dispersion import resonance
from .spectral import _is_dyadic

CENTERS = ("resonant", "literal")


@dataclass(frozen=True)
class Box:
    """Axis-parallel box lo <= k <= hi in (xi, eta1, eta2)."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def mirror(self) -> "Box":
        return Box(tuple(-v for v in self.hi), tuple(-v for v in self.lo))

    def contains(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return np.all((k >= self.lo) & (k <= self.hi), axis=-1)

    def corners(self) -> np.ndarray:
        idx = np.array(np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij")).reshape(3, -1).T
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.where(idx == 0, lo, hi)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, 3))


@dataclass(frozen=True)
class IllposedConfig:
    """Parameters of the two-box experiment.

    beta = N^{(1 - alpha - theta)/2}, delta = theta/2.  ``center`` places D2 at
    eta1 = sqrt(alpha+1) N^{1+alpha/2} ("resonant") or sqrt(alpha+1) N^2
    ("literal"); both agree at alpha = 2.
    """

    N: float = 16.0
    theta: float = 0.1
    alpha: float = 2.0
    sbar: tuple = (0.0, 0.0)
    center: str = "resonant"
    quad_order: int = 6
    samples: int = 4096
    seed: int = 0

    def __post_init__(self):
        if not (2.0 <= self.alpha <= 4.0):
            raise ValueError(f"alpha must lie in [2, 4], got {self.alpha}")
        if not _is_dyadic(self.N) or self.N < 16:
            raise ValueError(f"N must be dyadic and >= 16, got {self.N}")
        if not (0.0 < self.theta < 0.5):
            raise ValueError(f"theta must lie in (0, 0.5), got {self.theta}")
        if self.center not in CENTERS:
            raise ValueError(f"center must be one of {CENTERS}")
        if self.quad_order < 2:
            raise ValueError("quad_order must be >= 2")
        object.__setattr__(self, "sbar", tuple(float(v) for v in self.sbar))
        if self.beta >= 1.0:
            raise ValueError(f"beta = {self.beta:.3g} is not small; increase N")
        if self.beta >= 0.1:
            warnings.warn(
                f"beta = {self.beta:.3g} >= 0.1 at N = {self.N:g}; asymptotics are rough",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def beta(self) -> float:
        return float(self.N) ** ((1.0 - self.alpha - self.theta) / 2.0)

    @property
    def delta(self) -> float:
        return self.theta / 2.0

    @property
    def eta_center(self) -> float:
        p = 1.0 + self.alpha / 2.0 if self.center == "resonant" else 2.0
        return math.sqrt(self.alpha + 1.0) * float(self.N) ** p

    @property
    def resonance_scale(self) -> float:
        """N^{alpha-1} beta^2 (= N^{-theta})."""
        return float(self.N) ** (self.alpha - 1.0) * self.beta**2

    @property
    def proxy_exponent(self) -> float:
        """Exponent e in N * beta^{7/4 + delta} = N^e."""
        return proxy_exponent(self.alpha, self.theta)


def proxy_exponent(alpha: float, theta: float) -> float:
    return 1.0 + (1.75 + theta / 2.0) * (1.0 - alpha - theta) / 2.0


def proxy_exponent_limit(alpha: float) -> float:
    """theta -> 0 limit, 15/8 - 7 alpha / 8."""
    return 15.0 / 8.0 - 7.0 * alpha / 8.0


@dataclass(frozen=True)
class IllposedData:
    """Real two-box data: phi_hat = (a1 1_{+-D1} + a2 1_{+-D2}) / 2."""

    cfg: IllposedConfig
    D1: Box
    D2: Box
    a1: float
    a2: float

    @property
    def boxes(self) -> list:
        """(box, amplitude) for D1, -D1, D2, -D2."""
        h1, h2 = 0.5 * self.a1, 0.5 * self.a2
        return [(self.D1, h1), (self.D1.mirror(), h1), (self.D2, h2), (self.D2.mirror(), h2)]

    def fourier(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape[:-1])
        for box, a in self.boxes:
            out = out + a * box.contains(k)
        return out

    def norm(self, sbar: Optional[Sequence[float]] = None) -> float:
        sbar = self.cfg.sbar if sbar is None else sbar
        q = max(self.cfg.quad_order, 8)
        total = 0.0
        for box, a in self.boxes:
            pts, wts = _box_rule(box.lo, box.hi, q)
            total += a * a * float(np.sum(wts * _weight(pts, sbar) ** 2))
        return math.sqrt(total)


def _box_d1(cfg: IllposedConfig) -> Box:
    b, a = cfg.beta, cfg.alpha
    h = math.sqrt(a + 1.0) * b * b
    w = b ** (0.5 + 2.0 * cfg.delta)
    return Box((b / 2.0, -h, -w), (b, h, w))


def _box_d2(cfg: IllposedConfig) -> Box:
    N, b = float(cfg.N), cfg.beta
    c = cfg.eta_center
    w = N ** (0.5 - cfg.delta)
    return Box((N, c, -w), (N + b, c + b * b, w))


def build_illposed_data(cfg: IllposedConfig) -> IllposedData:
    D1, D2 = _box_d1(cfg), _box_d2(cfg)
    s1, s2 = cfg.sbar
    a1 = D1.volume ** -0.5
    a2 = D2.volume ** -0.5 * float(cfg.N) ** (-s1 - (1.0 + cfg.alpha / 2.0) * s2)
    return IllposedData(cfg, D1, D2, a1, a2)


def lattice_measure(box: Box, spacing: Sequence[float]) -> float:
    """Number of lattice points h Z^3 inside ``box`` times the cell volume."""
    count = 1
    for lo, hi, h in zip(box.lo, box.hi, spacing):
        count *= max(0, math.floor(hi / h + 1e-12) - math.ceil(lo / h - 1e-12) + 1)
    return count * float(np.prod(spacing))


# ---------------------------------------------------------------------------
# Quadrature helpers
# ---------------------------------------------------------------------------


def _weight(k: np.ndarray, sbar) -> np.ndarray:
    s1, s2 = sbar
    xi = k[..., 0]
    eta_sq = k[..., 1] ** 2 + k[..., 2] ** 2
    return (1.0 + xi * xi) ** (s1 / 2.0) * (1.0 + eta_sq) ** (s2 / 2.0)


def _gl(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


def _box_rule(lo, hi, q: int):
    x, w = _gl(q)
    axes, wts = [], []
    for a, b in zip(lo, hi):
        axes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wts.append(0.5 * (b - a) * w)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    wgrid = np.einsum("i,j,k->ijk", *wts).ravel()
    return grid, wgrid


def _piecewise_rule(breaks: Sequence[np.ndarray], q: int):
    x, w = _gl(q)
    axes, wts = [], []
    for br in breaks:
        br = np.unique(np.round(br, 14))
        a, b = br[:-1, None], br[1:, None]
        axes.append((0.5 * (b - a) * x + 0.5 * (a + b)).ravel())
        wts.append((0.5 * (b - a) * w).ravel())
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    wgrid = np.einsum("i,j,k->ijk", *wts).ravel()
    return grid, wgrid


def duhamel_factor(t: float, om: np.ndarray) -> np.ndarray:
    """(exp(i t Omega) - 1) / (i Omega), continuous at Omega = 0."""
    x = t * om
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 + 0.5j * x, np.expm1(1j * safe) / (1j * safe))
    return t * out


def _resonance3(alpha: float, k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    return resonance(alpha, k1[..., 0], k1[..., 1:], k2[..., 0], k2[..., 1:])


def _pair_integral(
    alpha: float,
    t: float,
    k: np.ndarray,
    A: Box,
    B: Box,
    q: int,
    linear: bool = False,
    chunk: int = 4096,
) -> np.ndarray:
    """int_{k1 in A, k - k1 in B} g(k1, k - k1) dk1 at each output point ``k``."""
    x, w = _gl(q)
    Alo, Ahi = np.asarray(A.lo), np.asarray(A.hi)
    Blo, Bhi = np.asarray(B.lo), np.asarray(B.hi)
    out = np.zeros(len(k), dtype=complex)
    wt = np.einsum("i,j,k->ijk", w, w, w).ravel()
    for s in range(0, len(k), chunk):
        kk = k[s : s + chunk]
        lo = np.maximum(Alo, kk - Bhi)
        hi = np.minimum(Ahi, kk - Blo)
        ok = np.all(hi > lo, axis=1)
        if not ok.any():
            continue
        lo, hi, kk = lo[ok], hi[ok], kk[ok]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes = [mid[:, d, None] + half[:, d, None] * x[None, :] for d in range(3)]
        k1 = np.stack(
            [
                np.broadcast_to(nodes[0][:, :, None, None], (len(kk), q, q, q)),
                np.broadcast_to(nodes[1][:, None, :, None], (len(kk), q, q, q)),
                np.broadcast_to(nodes[2][:, None, None, :], (len(kk), q, q, q)),
            ],
            axis=-1,
        ).reshape(len(kk), -1, 3)
        k2 = kk[:, None, :] - k1
        if linear:
            g = np.full(k1.shape[:2], t, dtype=complex)
        else:
            g = duhamel_factor(t, _resonance3(alpha, k1, k2))
        jac = np.prod(half, axis=1)
        vals = jac * (g @ wt)
        idx = np.flatnonzero(ok) + s
        out[idx] = vals
    return out


def _minkowski_breaks(pairs) -> list:
    breaks = [[], [], []]
    for A, B, _ in pairs:
        for d in range(3):
            for a in (A.lo[d], A.hi[d]):
                for b in (B.lo[d], B.hi[d]):
                    breaks[d].append(a + b)
    return [np.asarray(b) for b in breaks]


def bilinear_norm(
    alpha: float,
    t: float,
    pairs,
    sbar,
    q: int,
    linear: bool = False,
) -> float:
    """|| xi * sum_pairs c * int g ||_{H^sbar} over the pairs' common output region.

    ``pairs`` is a list of (A, B, c); pairs whose output boxes overlap must be
    passed together so that they add coherently.
    """
    pts, wts = _piecewise_rule(_minkowski_breaks(pairs), q)
    acc = np.zeros(len(pts), dtype=complex)
    for A, B, c in pairs:
        acc += c * _pair_integral(alpha, t, pts, A, B, q, linear)
    dens = (pts[:, 0] * _weight(pts, sbar) * np.abs(acc)) ** 2
    return math.sqrt(float(np.sum(wts * dens)))


def _boxes_overlap(p, r) -> bool:
    A, B, _ = p
    C, D, _ = r
    for d in range(3):
        lo1, hi1 = A.lo[d] + B.lo[d], A.hi[d] + B.hi[d]
        lo2, hi2 = C.lo[d] + D.lo[d], C.hi[d] + D.hi[d]
        if hi1 < lo2 or hi2 < lo1:
            return False
    return True


def _clusters(pairs) -> list:
    groups: list = []
    for p in pairs:
        hit = [g for g in groups if any(_boxes_overlap(p, r) for r in g)]
        merged = [p]
        for g in hit:
            merged.extend(g)
            groups.remove(g)
        groups.append(merged)
    return groups


def _is_high(box: Box, cfg: IllposedConfig) -> bool:
    return abs(box.lo[0] + box.hi[0]) / 2.0 > cfg.N / 2.0


def _pairs(data: IllposedData, part: str) -> list:
    cfg = data.cfg
    boxes = data.boxes
    out = []
    for A, a in boxes:
        for B, b in boxes:
            hA, hB = _is_high(A, cfg), _is_high(B, cfg)
            kind = "f3" if hA != hB else ("f2" if hA else "f1")
            if kind == part:
                out.append((A, B, a * b))
    return out


def part_norm(data: IllposedData, t: float, part: str = "f3", linear: bool = False) -> float:
    """H^sbar norm of the Low x Low (f1), High x High (f2) or High x Low (f3) part."""
    if part not in ("f1", "f2", "f3"):
        raise ValueError("part must be f1, f2 or f3")
    if t == 0:
        return 0.0
    total = 0.0
    for group in _clusters(_pairs(data, part)):
        total += bilinear_norm(data.cfg.alpha, t, group, data.cfg.sbar, data.cfg.quad_order, linear) ** 2
    return math.sqrt(total)


def f3_support(data: IllposedData) -> tuple:
    """xi-range of the High x Low output on the positive side."""
    lo = min(A.lo[0] + B.lo[0] for A, B, _ in _pairs(data, "f3") if A.lo[0] + B.lo[0] > 0)
    hi = max(A.hi[0] + B.hi[0] for A, B, _ in _pairs(data, "f3"))
    return lo, hi


def max_resonance(data: IllposedData) -> float:
    """max |Omega| over corner pairs and seeded random pairs of D1 x D2."""
    rng = np.random.default_rng(data.cfg.seed)
    n = data.cfg.samples
    k1 = np.concatenate([np.repeat(data.D1.corners(), 8, axis=0), data.D1.sample(n, rng)])
    k2 = np.concatenate([np.tile(data.D2.corners(), (8, 1)), data.D2.sample(n, rng)])
    return float(np.max(np.abs(_resonance3(data.cfg.alpha, k1, k2))))


@dataclass(frozen=True)
class IllposedResult:
    cfg: IllposedConfig
    t: float
    f3_norm: float
    phi_norm: float
    ratio: float
    inflation: float
    max_resonance: float
    resonance_constant: float


def illposed_ratio(cfg: IllposedConfig, t: float, data: Optional[IllposedData] = None) -> IllposedResult:
    """||f3(t)||_{H^sbar} / (N |D1|^{1/2}), with the inflation ||f3|| / ||phi||^2."""
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    data = data or build_illposed_data(cfg)
    f3 = part_norm(data, t, "f3")
    phi = data.norm()
    om = max_resonance(data)
    return IllposedResult(
        cfg=cfg,
        t=t,
        f3_norm=f3,
        phi_norm=phi,
        ratio=f3 / (cfg.N * math.sqrt(data.D1.volume)),
        inflation=f3 / phi**2,
        max_resonance=om,
        resonance_constant=om / cfg.resonance_scale,
    )


def small_t_slope(cfg: IllposedConfig, data: Optional[IllposedData] = None) -> float:
    """lim_{t -> 0} ratio(t)/t, from the integrand with Omega set to zero."""
    data = data or build_illposed_data(cfg)
    f3 = part_norm(data, 1.0, "f3", linear=True)
    return f3 / (cfg.N * math.sqrt(data.D1.volume))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ("alpha", "N", "theta", "t", "ratio", "proxy_exponent", "max_resonance_norm")


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)
    inflation: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    def slope(self, alpha: float, key: str = "inflation") -> float:
        """Fitted log-log slope in N of ``inflation`` or ``ratio`` at this alpha."""
        pts = sorted(
            (r["N"], self.inflation[(r["alpha"], r["N"])] if key == "inflation" else r["ratio"])
            for r in self.rows
            if r["alpha"] == alpha
        )
        if len(pts) < 2:
            raise ValueError(f"need two N values at alpha={alpha}")
        N, v = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
        return float(stats.linregress(N, v).slope)

    def resonance_constants(self, alpha: float) -> list:
        return [r["max_resonance_norm"] for r in self.rows if r["alpha"] == alpha]

    def to_csv(self) -> str:
        lines = [",".join(SWEEP_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in SWEEP_COLUMNS))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _cell(alpha, N, theta, t, base):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cfg = IllposedConfig(
            N=N,
            theta=theta,
            alpha=alpha,
            sbar=base.sbar,
            center=base.center,
            quad_order=base.quad_order,
            samples=base.samples,
            seed=base.seed,
        )
    return illposed_ratio(cfg, t)


def illposed_sweep(
    alphas: Sequence[float],
    Ns: Sequence[float],
    theta: float = 0.1,
    t: float = 0.5,
    base: Optional[IllposedConfig] = None,
    workers: int = 1,
) -> SweepTable:
    """Ratio, proxy exponent and resonance constant for every (alpha, N)."""
    if base is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            base = IllposedConfig(N=16, theta=theta)
    cells = [(float(a), float(N)) for a in alphas for N in Ns]
    table = SweepTable()

    def run(cell):
        try:
            return cell, _cell(cell[0], cell[1], theta, t, base), None
        except (ValueError, ArithmeticError) as exc:
            return cell, None, str(exc)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]
    for (a, N), res, err in results:
        if err is not None:
            table.errors.append({"alpha": a, "N": N, "error": err})
            continue
        table.rows.append(
            {
                "alpha": a,
                "N": int(N),
                "theta": float(theta),
                "t": float(t),
                "ratio": res.ratio,
                "proxy_exponent": proxy_exponent(a, theta),
                "max_resonance_norm": res.resonance_constant,
            }
        )
        table.inflation[(a, int(N))] = res.inflation
    return table


__all__ = [
    "Box",
    "IllposedConfig",
    "IllposedData",
    "IllposedResult",
    "SweepTable",
    "build_illposed_data",
    "f3_support",
    "illposed_ratio",
    "illposed_sweep",
    "lattice_measure",
    "max_resonance",
    "part_norm",
    "proxy_exponent",
    "small_t_slope",
]

