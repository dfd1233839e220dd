import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kpi3.dispersion import DispersionParams, omega, propagate
from kpi3.evolve import (
    BlowUpError,
    DiagnosticSeries,
    QuadratureError,
    SolverConfig,
    dominant_level,
    picard_second,
    rhs_nonlinear,
    simulate,
    step_ifrk4,
    step_size,
)
from kpi3.spectral import DomainSpec, SpectralField, build_grid, to_physical, to_spectral

from conftest import random_real_field, smooth_field


def cos_mode(d, jx, j1=0, j2=0, amp=1.0):
    x, y1, y2 = build_grid(d).coordinates()
    u = amp * np.cos(jx * x / d.nu + (j1 * y1 + j2 * y2) / d.lam)
    return to_spectral(d, np.broadcast_to(u, d.shape))


def test_config_rejects():
    for bad in (dict(dt=0), dict(c=-1), dict(t_end=-1), dict(dt_policy="adaptive"), dict(galerkin_M=3), dict(alpha=1)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_rhs_zero_and_cos(dom16):
    z = SpectralField(dom16, np.zeros(dom16.shape))
    assert not np.any(rhs_nonlinear(z).coeffs)
    r = rhs_nonlinear(cos_mode(dom16, 1))
    x, _, _ = build_grid(dom16).coordinates()
    expect = to_spectral(dom16, np.broadcast_to(-np.sin(2 * x), dom16.shape))
    assert np.max(np.abs(r.coeffs - expect.coeffs)) < 1e-12 * np.max(np.abs(expect.coeffs))


def test_rhs_against_fine_grid():
    """Two modes inside the dealias band: the rhs is 2 u u_x evaluated analytically."""
    d = DomainSpec(nx=24, ny1=24, ny2=24)
    u = cos_mode(d, 2, 1, 0) + cos_mode(d, 3, -2, 1, 0.5)
    r = to_physical(rhs_nonlinear(u))
    x, y1, y2 = build_grid(d).coordinates()
    a, b = 2 * x + y1, 3 * x - 2 * y1 + y2
    v = np.cos(a) + 0.5 * np.cos(b)
    dv = -2 * np.sin(a) - 1.5 * np.sin(b)
    assert np.allclose(r, np.broadcast_to(2 * v * dv, d.shape), atol=1e-12)


@given(seed=st.integers(0, 10**6), M=st.sampled_from([None, 2, 4]))
def test_rhs_real_and_mean_zero(seed, M):
    f = random_real_field(DomainSpec(nx=16, ny1=8, ny2=8), seed)
    r = rhs_nonlinear(f, M)
    assert r.hermitian_defect() < 1e-12
    assert not np.any(r.coeffs[0])


def test_rhs_rejects_mean(dom16):
    with pytest.raises(ValueError):
        rhs_nonlinear(random_real_field(dom16, 0, mean_zero=False))


def test_linear_step_is_propagator(dom16):
    f = random_real_field(dom16, 1)
    cfg = SolverConfig(nonlinear=False)
    g = step_ifrk4(f, 1e-2, cfg)
    assert np.max(np.abs(g.coeffs - propagate(f, 1e-2, 2.0).coeffs)) < 1e-12 * np.max(np.abs(f.coeffs))


def test_l2_drift_per_step(dom16):
    f = smooth_field(dom16, 3, amplitude=0.1)
    cfg = SolverConfig(dt=1e-3)
    g = step_ifrk4(f, 1e-3, cfg)
    assert abs(g.l2() - f.l2()) / f.l2() < 1e-10


def _state_at(f, dt, t_end, alpha=2.0):
    cfg = SolverConfig(alpha=alpha, dt=dt, t_end=t_end, diag_every=10**6)
    return simulate(f, cfg)[0].coeffs


def test_richardson_order(dom16):
    f = cos_mode(dom16, 1, 1) + cos_mode(dom16, 2, 0, -1, 1.0) + cos_mode(dom16, 1, 1, 1, 0.5)
    f = to_spectral(dom16, to_physical(f)) * 0.5
    t = 0.2
    sols = [_state_at(f, dt, t) for dt in (4e-3, 2e-3, 1e-3)]
    order = math.log2(np.linalg.norm(sols[0] - sols[1]) / np.linalg.norm(sols[1] - sols[2]))
    assert 3.7 <= order <= 4.3


def test_simulate_trivial_and_linear(dom16):
    f = random_real_field(dom16, 2)
    out, series = simulate(f, SolverConfig(t_end=0.0))
    assert np.array_equal(out.coeffs, f.coeffs)
    assert len(series) == 1
    cfg = SolverConfig(nonlinear=False, dt=1e-3, t_end=0.1)
    out, _ = simulate(f, cfg)
    ref = propagate(f, 0.1, 2.0)
    assert np.max(np.abs(out.coeffs - ref.coeffs)) < 1e-11 * np.max(np.abs(f.coeffs))


def test_simulate_rejects(dom16):
    with pytest.raises(ValueError):
        simulate(random_real_field(dom16, 0, mean_zero=False), SolverConfig())
    c = np.zeros(dom16.shape, dtype=complex)
    c[1, 0, 0] = 1.0
    with pytest.raises(ValueError):
        simulate(SpectralField(dom16, c), SolverConfig())


def test_small_amplitude_conservation(dom16):
    f = smooth_field(dom16, 4, amplitude=1e-3)
    _, s = simulate(f, SolverConfig(dt=1e-3, t_end=0.1))
    assert s.relative_drift("l2") < 1e-8
    assert s.relative_drift("energy") < 1e-6


def test_structure_preserved():
    d = DomainSpec(nx=16, ny1=8, ny2=8)
    f = smooth_field(d, 5, amplitude=0.5)
    out, s = simulate(f, SolverConfig(dt=2e-3, t_end=0.05, galerkin_M=4))
    assert not np.any(out.coeffs[0])
    assert out.hermitian_defect() < 1e-12
    assert np.all(np.diff(s.t) > 0)
    assert s.relative_drift("energy") < 1e-8


def test_galerkin_consistency():
    d = DomainSpec(nx=32, ny1=16, ny2=16)
    f = smooth_field(d, 6, amplitude=1e-2, kmax=2)
    a, _ = simulate(f, SolverConfig(dt=1e-3, t_end=0.05, galerkin_M=4))
    b, _ = simulate(f, SolverConfig(dt=1e-3, t_end=0.05, galerkin_M=8))
    g = build_grid(d)
    band = (np.abs(g.xi) <= 1) & (np.abs(g.eta1) <= 1) & (np.abs(g.eta2) <= 1)
    band = np.broadcast_to(band, d.shape)
    diff = np.max(np.abs(a.coeffs - b.coeffs)[band]) / np.max(np.abs(f.coeffs))
    assert diff < 1e-6


def test_freq_scaled_policy():
    d = DomainSpec(nx=64, ny1=8, ny2=8)
    f = cos_mode(d, 5)
    assert dominant_level(f) == 8.0
    cfg = SolverConfig(dt_policy="freq_scaled", c=0.1, alpha=3.0)
    assert step_size(f, cfg) == pytest.approx(0.1 * DispersionParams(3.0).time_scale(8))


def test_blowup_guard(dom16):
    f = cos_mode(dom16, 1, 1, 0, 1e4) + cos_mode(dom16, 3, 0, 2, 1e4)
    with pytest.raises(BlowUpError, match="sup norm"):
        simulate(f, SolverConfig(dt=0.05, t_end=5.0))


def test_diagnostic_series():
    s = DiagnosticSeries()
    s.append(0.0, 1.0, 2.0, {"1": 3.0}, 0.0)
    s.append(0.5, 1.0, 2.5, {"1": 3.0}, 0.0)
    with pytest.raises(ValueError):
        s.append(0.5, 1.0, 2.0, {}, 0.0)
    lines = s.to_ndjson().splitlines()
    assert json.loads(lines[1]) == {"t": 0.5, "l2": 1.0, "energy": 2.5, "es": {"1": 3.0}, "leak": 0.0}
    assert s.relative_drift("energy") == 0.25


def test_picard_trivial(dom16):
    z = SpectralField(dom16, np.zeros(dom16.shape))
    assert not np.any(picard_second(z, 0.5, 2.0).coeffs)
    f = cos_mode(dom16, 1, 1)
    assert not np.any(picard_second(f, 0.0, 2.0).coeffs)


@pytest.mark.parametrize("alpha", [2.0, 3.0])
def test_picard_closed_form(alpha):
    """phi = cos(k.x): u2 = -xi (cos(2k.x + t W) - cos(2k.x + 2 t w)) / (2w - W)."""
    d = DomainSpec(alpha=alpha, nx=16, ny1=16, ny2=16)
    jx, j1 = 1, 2
    f = cos_mode(d, jx, j1)
    t = 0.3
    u2 = to_physical(picard_second(f, t, alpha))
    xi, eta = jx / d.nu, np.array([j1 / d.lam, 0.0])
    w, W = omega(alpha, xi, eta), omega(alpha, 2 * xi, 2 * eta)
    x, y1, _ = build_grid(d).coordinates()
    ph = 2 * (xi * x + eta[0] * y1)
    expect = -xi * (np.cos(ph + t * W) - np.cos(ph + 2 * t * w)) / (2 * w - W)
    assert np.allclose(u2, np.broadcast_to(expect, d.shape), atol=1e-9)


def test_picard_small_t_linear():
    d = DomainSpec(nx=16, ny1=16, ny2=16)
    f = cos_mode(d, 1, 1)
    ts = np.linspace(0.01, 0.05, 5)
    norms = [picard_second(f, t, 2.0).l2() for t in ts]
    fit = np.polyfit(ts, norms, 1, full=True)
    ss_res = fit[1][0]
    ss_tot = np.sum((norms - np.mean(norms)) ** 2)
    assert 1 - ss_res / ss_tot > 0.99


def test_picard_quadrature_error(dom16):
    f = random_real_field(dom16, 0)
    with pytest.raises(QuadratureError) as info:
        picard_second(f, 1.0, 2.0, tol=1e-30, max_nodes=129)
    assert info.value.achieved > 0
