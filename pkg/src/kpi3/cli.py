"""Command-line front end: ``kpi3 <subcommand> --config run.toml --out DIR``.

Each run reads a TOML file with ``[domain]``, ``[solver]`` and
``[experiment]`` tables, writes deterministic data files into the output
directory and a ``meta.json`` sidecar holding everything that is not
reproducible (timestamps, wall time, host).

Exit codes: 0 success, 2 bad invocation or config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import platform
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchReport, BilinearBand, bench_bilinear_transverse, bench_l4_strichartz, bench_leibniz
from .dispersion import DEFAULT_SMALLNESS, kdv_resonance, resonance, resonance_3d_split, transverse_term
from .evolve import BlowUpError, QuadratureError, SolverConfig, simulate
from .illposed import IllposedConfig, illposed_sweep
from .norms import E, H, Hdot, NormSpec, frequency_envelope, norm
from .scaling import coefficient_factor, rescale_field, scaling_exponent, verify_flow_scaling
from .snapshot import SnapshotError, read_snapshot, write_snapshot
from .spectral import DomainSpec, SpectralField, project_mean_zero, random_band_field, set_fft_workers, to_spectral

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("kpi3")

SUBCOMMANDS = ("simulate", "resonance", "scaling", "illposed", "bench", "norms")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    extra = set(cfg) - {"domain", "solver", "experiment"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    for key in ("domain", "solver", "experiment"):
        if not isinstance(cfg.setdefault(key, {}), dict):
            raise ConfigError(f"[{key}] must be a table")
    return cfg


def _build(cls, table: dict, section: str, **overrides):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kwargs = {**table, **overrides}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


class _Section:
    """Typed access to the [experiment] table that rejects unused keys."""

    def __init__(self, table: dict):
        self.table = dict(table)
        self.used: set = set()

    def get(self, key, default=None, kind=None):
        self.used.add(key)
        v = self.table.get(key, default)
        if kind is not None and v is not None:
            try:
                v = [kind(x) for x in v] if isinstance(v, list) else kind(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[experiment] {key}: {exc}") from exc
        return v

    def check(self):
        unknown = set(self.table) - self.used
        if unknown:
            raise ConfigError(f"unknown keys in [experiment]: {sorted(unknown)}")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serialisable: {type(v).__name__}")


def _csv(rows: list, cols: list) -> str:
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    return ",".join(cols) + "\n" + "".join(",".join(fmt(r[c]) for c in cols) + "\n" for r in rows)


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


def initial_field(domain: DomainSpec, exp: _Section, seed: int) -> SpectralField:
    """Initial state described by [experiment]: ``init`` = "modes", "band" or "snapshot"."""
    kind = exp.get("init", "modes")
    amplitude = exp.get("amplitude", 1.0, float)
    if kind == "snapshot":
        path = exp.get("input")
        if path is None:
            raise ConfigError("init = 'snapshot' needs 'input'")
        try:
            f, _ = read_snapshot(path)
        except (OSError, SnapshotError) as exc:
            raise ConfigError(f"cannot load snapshot {path}: {exc}") from exc
        if f.domain.shape != domain.shape:
            raise ConfigError("snapshot grid does not match [domain]")
        return f * amplitude
    if kind == "band":
        N = exp.get("N", 1.0, float)
        M = exp.get("M", None, float)
        f = random_band_field(domain, N, M, seed=seed)
        return f * amplitude
    if kind != "modes":
        raise ConfigError(f"unknown init {kind!r}; expected modes, band or snapshot")
    modes = exp.get("modes", [{"k": [1, 0, 0], "amp": 1.0}])
    x, y1, y2 = np.meshgrid(*_axes(domain), indexing="ij")
    u = np.zeros(domain.shape)
    for m in modes:
        if not isinstance(m, dict) or "k" not in m or len(m["k"]) != 3:
            raise ConfigError("each mode needs k = [jx, jy1, jy2]")
        jx, j1, j2 = (int(v) for v in m["k"])
        if jx == 0:
            raise ConfigError("modes must have nonzero x-index (mean-zero data)")
        phase = jx * x / domain.nu + (j1 * y1 + j2 * y2) / domain.lam + float(m.get("phase", 0.0))
        u += float(m.get("amp", 1.0)) * np.cos(phase)
    return project_mean_zero(to_spectral(domain, amplitude * u))


def _axes(domain: DomainSpec):
    return [np.arange(n) * (L / n) for n, L in zip(domain.shape, domain.lengths)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict, out: Path, seed: int) -> dict:
    domain = _build(DomainSpec, cfg["domain"], "domain")
    solver = cfg["solver"]
    if "alpha" in solver and solver["alpha"] != domain.alpha:
        raise ConfigError("[solver] alpha differs from [domain] alpha")
    sc = _build(SolverConfig, solver, "solver", alpha=domain.alpha)
    exp = _Section(cfg["experiment"])
    phi = initial_field(domain, exp, seed)
    exp.check()
    final, series = simulate(phi, sc)
    lines = "".join(json.dumps({**r, "seed": seed}, sort_keys=True) + "\n" for r in series.records())
    (out / "diagnostics.ndjson").write_text(lines)
    write_snapshot(out / "final.kpi3", final)
    summary = {
        "seed": seed,
        "steps_recorded": len(series),
        "l2_drift": series.relative_drift("l2"),
        "energy_drift": series.relative_drift("energy"),
    }
    _dump_json(out / "summary.json", summary)
    return summary


def cmd_resonance(cfg: dict, out: Path, seed: int) -> dict:
    exp = _Section(cfg["experiment"])
    alpha = exp.get("alpha", cfg["domain"].get("alpha", 2.0), float)
    n = exp.get("samples", 10000, int)
    scale = exp.get("scale", 10.0, float)
    smallness = exp.get("smallness", DEFAULT_SMALLNESS, float)
    exp.check()
    if n < 1 or not scale > 0:
        raise ConfigError("samples must be >= 1 and scale > 0")
    rng = np.random.default_rng(seed)
    k1 = rng.uniform(-scale, scale, size=(n, 3))
    k2 = rng.uniform(-scale, scale, size=(n, 3))
    xi1, xi2, e1, e2 = k1[:, 0], k2[:, 0], k1[:, 1:], k2[:, 1:]
    om = resonance(alpha, xi1, e1, xi2, e2)
    kdv = kdv_resonance(alpha, xi1, xi2)
    tr = transverse_term(xi1, e1, xi2, e2)
    resid = np.abs(om - (-kdv + tr)) / np.maximum(np.abs(om), np.abs(kdv))
    split = np.array([resonance_3d_split(alpha, a, b) for a, b in zip(k1, k2)])
    # full resonance = shear - (2d part in the sum-minus-parts convention)
    scale3 = np.maximum(np.maximum(np.abs(om), np.abs(split[:, 0])), np.abs(split[:, 1]))
    resid3 = np.abs(om + split[:, 0] - split[:, 1]) / scale3
    resonant = np.abs(om) < smallness * np.abs(kdv)
    rows = [
        {
            "seed": seed,
            "xi1": xi1[i], "eta1_1": e1[i, 0], "eta1_2": e1[i, 1],
            "xi2": xi2[i], "eta2_1": e2[i, 0], "eta2_2": e2[i, 1],
            "omega": om[i], "kdv": kdv[i], "transverse": tr[i],
            "resonant": int(resonant[i]), "identity_residual": resid[i],
        }
        for i in range(n)
    ]
    cols = list(rows[0])
    (out / "resonance.csv").write_text(_csv(rows, cols))
    summary = {
        "seed": seed,
        "alpha": alpha,
        "samples": n,
        "max_identity_residual": float(resid.max()),
        "max_split_residual": float(resid3.max()),
        "resonant_fraction": float(resonant.mean()),
    }
    _dump_json(out / "summary.json", summary)
    return summary


def cmd_scaling(cfg: dict, out: Path, seed: int) -> dict:
    domain = _build(DomainSpec, cfg["domain"], "domain")
    exp = _Section(cfg["experiment"])
    lam = exp.get("lam", 2.0, float)
    t_end = exp.get("t_end", 0.05, float)
    exponents = exp.get("norms", [[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    phi = initial_field(domain, exp, seed)
    exp.check()
    sc = _build(SolverConfig, cfg["solver"], "solver", alpha=domain.alpha)
    gap = verify_flow_scaling(phi, lam, domain.alpha, t_end, sc)
    psi = rescale_field(phi, lam)
    rows = []
    for pair in exponents:
        s1, s2 = (float(v) for v in pair)
        before, after = norm(phi, Hdot(s1, s2)), norm(psi, Hdot(s1, s2))
        e = scaling_exponent(domain.alpha, s1, s2)
        rows.append({"s1": s1, "s2": s2, "measured": after / before, "predicted": lam**e, "exponent": e})
    summary = {
        "seed": seed,
        "lam": lam,
        "t_end": t_end,
        "flow_gap": gap,
        "coefficient_factor": coefficient_factor(domain.alpha, lam),
        "norms": rows,
    }
    _dump_json(out / "scaling.json", summary)
    return summary


def cmd_illposed(cfg: dict, out: Path, seed: int, workers: int) -> dict:
    exp = _Section(cfg["experiment"])
    alphas = exp.get("alphas", [2.0, 2.5], float)
    Ns = exp.get("Ns", [16, 32, 64], float)
    theta = exp.get("theta", 0.02, float)
    t = exp.get("t", 0.5, float)
    base_kw = {
        "center": exp.get("center", "resonant"),
        "quad_order": exp.get("quad_order", 6, int),
        "sbar": tuple(exp.get("sbar", [0.0, 0.0], float)),
    }
    exp.check()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        base = _build(IllposedConfig, base_kw, "experiment", N=64, theta=theta, seed=seed)
    table = illposed_sweep(alphas, Ns, theta=theta, t=t, base=base, workers=workers)
    rows = [{**r, "inflation": table.inflation[(r["alpha"], r["N"])], "seed": seed} for r in table.rows]
    cols = ["alpha", "N", "theta", "t", "ratio", "inflation", "proxy_exponent", "max_resonance_norm", "seed"]
    (out / "illposed.csv").write_text(_csv(rows, cols))
    slopes = {}
    for a in alphas:
        try:
            slopes[repr(a)] = table.slope(a)
        except ValueError:
            slopes[repr(a)] = None
    summary = {"seed": seed, "inflation_slopes": slopes, "errors": table.errors}
    _dump_json(out / "summary.json", summary)
    if not table.rows:
        raise ConfigError("no (alpha, N) cell could be evaluated")
    return summary


def cmd_bench(cfg: dict, out: Path, seed: int) -> dict:
    exp = _Section(cfg["experiment"])
    kind = exp.get("kind", "l4")
    alpha = exp.get("alpha", cfg["domain"].get("alpha", 2.0), float)
    samples = exp.get("samples", 8, int)
    fit_params: list = []
    if kind == "l4":
        Ns = exp.get("Ns", [1.0, 2.0, 4.0], float)
        Ks = exp.get("Ks", [0.25, 0.5, 1.0], float)
        Ms = exp.get("Ms", [0.25, 1.0, 4.0], float)
        lam = exp.get("lam", 16.0, float)
        eps = exp.get("eps", 0.01, float)
        exp.check()
        report = bench_l4_strichartz(alpha, Ns, Ks, Ms, samples=samples, lam=lam, eps=eps, seed=seed)
        fit_params = ["M"]
    elif kind == "bilinear":
        fixed = exp.get("high", {"N": 8.0, "M": 1.0, "width": 0.125})
        sweep = exp.get("low", [{"N": 1.0, "M": m} for m in (0.125, 0.25, 0.5, 1.0)])
        lam = exp.get("lam", 64.0, float)
        smallness = exp.get("smallness", 0.25, float)
        exp.check()
        try:
            hi = BilinearBand(**fixed)
            lows = [BilinearBand(**b) for b in sweep]
        except TypeError as exc:
            raise ConfigError(f"[experiment] bands: {exc}") from exc
        report = BenchReport("bilinear_transverse")
        for lo in lows:
            report.extend(
                bench_bilinear_transverse(alpha, lo, hi, samples=samples, lam=lam, smallness=smallness, seed=seed)
            )
        fit_params = ["Mmin", "Nmin"]
    elif kind == "leibniz":
        ax = exp.get("ax", 0.5, float)
        by = exp.get("by", 0.5, float)
        delta = exp.get("delta", 0.1, float)
        p = exp.get("p", 4.0, float)
        sizes = exp.get("sizes", [16, 32], int)
        decay = exp.get("decay", 3.0, float)
        exp.check()
        report = bench_leibniz(ax, by, delta, p, samples=samples, sizes=sizes, decay=decay, seed=seed)
    else:
        raise ConfigError(f"unknown bench kind {kind!r}; expected l4, bilinear or leibniz")
    for param in fit_params:
        levels, _ = report.level_max(param, "lhs_unit") if report.records else ([], [])
        if len(levels) >= 4:
            report.add_fit(param)
    (out / "bench.csv").write_text(report.to_csv())
    summary = {**report.summary(), "seed": seed}
    _dump_json(out / "summary.json", summary)
    return summary


def cmd_norms(cfg: dict, out: Path, seed: int) -> dict:
    domain = _build(DomainSpec, cfg["domain"], "domain")
    exp = _Section(cfg["experiment"])
    phi = initial_field(domain, exp, seed)
    specs = exp.get("norms", [["L2"], ["E", 1.0], ["H", 1.0, 1.0], ["Hdot", 1.0, 1.0]])
    env_s = exp.get("envelope_s", 0.0, float)
    delta = exp.get("envelope_delta", 0.1, float)
    exp.check()
    makers = {"L2": lambda: NormSpec("L2"), "E": E, "H": H, "Hdot": Hdot}
    rows = []
    for entry in specs:
        kind, *args = entry
        if kind not in makers:
            raise ConfigError(f"unknown norm kind {kind!r}")
        try:
            spec = makers[kind](*(float(a) for a in args))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"norm {entry!r}: {exc}") from exc
        rows.append({"kind": kind, "args": [float(a) for a in args], "value": norm(phi, spec)})
    env = frequency_envelope(phi, s=env_s, delta=delta)
    summary = {
        "seed": seed,
        "norms": rows,
        "envelope": {
            "s": env_s,
            "delta": delta,
            "levels": list(env.levels),
            "pieces": env.pieces,
            "values": env.values,
            "holds": env.holds(delta),
        },
    }
    _dump_json(out / "norms.json", summary)
    return summary


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML run configuration")
    common.add_argument("--out", default="out", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=0, help="master seed recorded in every output")
    common.add_argument("--threads", type=int, default=None, help="worker cap (default: $KPI3_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    parser = argparse.ArgumentParser(prog="kpi3", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kpi3 {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", required=True)
    helps = {
        "simulate": "integrate the equation and write NDJSON diagnostics",
        "resonance": "sample the resonance function and check its identities",
        "scaling": "check the scaling symmetry of norms and flow",
        "illposed": "second-iterate norm inflation sweep",
        "bench": "Monte-Carlo bench of an estimate (l4, bilinear, leibniz)",
        "norms": "norms and frequency envelope of initial data",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _threads(arg) -> int:
    if arg is not None:
        n = arg
    else:
        try:
            n = int(os.environ.get("KPI3_THREADS", "1") or 1)
        except ValueError as exc:
            raise ConfigError("KPI3_THREADS must be an integer") from exc
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def run(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    started = time.time()
    stamp = datetime.now(timezone.utc).isoformat()
    try:
        workers = _threads(args.threads)
        set_fft_workers(workers)
        cfg = load_config(args.config)
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            probe = out / ".write-test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
        log.info("running %s with seed %d", args.command, args.seed)
        if args.command == "illposed":
            summary = cmd_illposed(cfg, out, args.seed, workers)
        else:
            summary = COMMANDS[args.command](cfg, out, args.seed)
    except ConfigError as exc:
        print(f"kpi3: config error: {exc}", file=sys.stderr)
        return 2
    except (BlowUpError, QuadratureError) as exc:
        print(f"kpi3: numerical failure: {exc}", file=sys.stderr)
        _dump_json(out / "meta.json", _meta(args, stamp, started, status="failed", error=str(exc)))
        return 3
    except ValueError as exc:
        print(f"kpi3: invalid parameters: {exc}", file=sys.stderr)
        return 2
    _dump_json(out / "meta.json", _meta(args, stamp, started, status="ok"))
    log.info("summary: %s", json.dumps(summary, sort_keys=True, default=_jsonable))
    return 0


def _meta(args, stamp, started, **extra) -> dict:
    return {
        "command": args.command,
        "config": str(args.config),
        "seed": args.seed,
        "version": __version__,
        "started": stamp,
        "wall_seconds": round(time.time() - started, 3),
        "host": platform.node(),
        "python": platform.python_version(),
        **extra,
    }


COMMANDS = {
    "simulate": cmd_simulate,
    "resonance": cmd_resonance,
    "scaling": cmd_scaling,
    "bench": cmd_bench,
    "norms": cmd_norms,
}


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
