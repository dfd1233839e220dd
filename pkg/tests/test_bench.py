import json
import math

import numpy as np
import pytest

from kpi3.bench import (
    BenchReport,
    BilinearBand,
    bench_bilinear_transverse,
    bench_l4_strichartz,
    bench_leibniz,
    bilinear_sample,
    conjugate_exponent,
    fit_exponent,
    l2_of_coeffs,
    l4_constant,
    l4_power,
    leibniz_sides,
    max_ratio_by,
    mixed_norm,
    random_smooth_coeffs,
    resonant_eta,
    spacetime_l4,
    window,
)
from kpi3.dispersion import kdv_resonance, resonance
from kpi3.spectral import DomainSpec, to_spectral


def test_fit_exponent_power_law():
    lv = [1 / 8, 1 / 4, 1 / 2, 1]
    fit = fit_exponent("M", lv, [3 * v**0.5 for v in lv])
    assert fit.exponent == pytest.approx(0.5, abs=1e-12)
    assert fit.residual < 1e-12
    with pytest.raises(ValueError):
        fit_exponent("M", lv[:3], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_exponent("M", lv, [1, 0, 1, 1])


def test_report_csv_and_summary():
    r = BenchReport("demo")
    r.records.append({"N": 1.0, "seed": 5, "lhs": 1.0, "rhs": 2.0, "ratio": 0.5})
    lines = r.to_csv().splitlines()
    assert lines[0] == "inequality,N,seed,lhs,rhs,ratio"
    assert lines[1].startswith("demo,1.0,5,")
    s = json.loads(r.summary_json())
    assert s["max_ratio"] == 0.5 and s["samples"] == 1


def test_l4_constant_branches():
    assert l4_constant(2, 4, 0.25, 16) == 0.5
    assert l4_constant(2, 16, 4, 1, eps=0.01) == pytest.approx(2 * 4**0.01)
    assert l4_constant(2, 16, 4, 1, d2=1) == 2.0


def test_window_rejects_off_grid():
    d = DomainSpec(lam=16.0)
    with pytest.raises(ValueError):
        window(d, 1.1, 1e-3, (0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        window(d, -0.5, 1.0, (0.0, 0.0), 1.0)


def test_single_mode_l4():
    d = DomainSpec(lam=16.0)
    win = window(d, 1.0, 0.1, (0.0, 0.0), 1 / 32)
    assert win.shape == (1, 1, 1)
    a = np.array([[[0.7 - 0.2j]]])
    lhs = spacetime_l4(2.0, win, a)
    c = abs(a[0, 0, 0]) * d.dual_weight / (2 * math.pi) ** 3
    assert lhs == pytest.approx(c * d.volume**0.25, rel=1e-10)
    assert l2_of_coeffs(d, a * d.dual_weight / (2 * math.pi) ** 3) == pytest.approx(c * d.volume**0.5, rel=1e-12)


def test_two_mode_l4_power():
    d = DomainSpec(lam=4.0)
    c = np.zeros((2, 1, 1), dtype=complex)
    c[:, 0, 0] = [0.3, 1.1j]
    expect = d.volume * (0.3**4 + 1.1**4 + 4 * 0.3**2 * 1.1**2)
    assert l4_power(d, c) == pytest.approx(expect, rel=1e-12)


def test_scale_invariance_of_ratios():
    d = DomainSpec(lam=64.0)
    rng = np.random.default_rng(3)
    w1 = window(d, 1.0, 0.5, (0.0, 0.0), 0.25)
    w2 = window(d, 8.0, 0.125, (resonant_eta(2.0, 1.25, 8.0625), 0.0), 0.25)
    a1 = rng.standard_normal(w1.shape) + 1j * rng.standard_normal(w1.shape)
    a2 = rng.standard_normal(w2.shape) + 0j
    lhs = spacetime_l4(2.0, w1, a1)
    assert spacetime_l4(2.0, w1, 3 * a1) / (3 * l2_of_coeffs(d, a1)) == pytest.approx(lhs / l2_of_coeffs(d, a1), rel=1e-12)
    l, n1, n2 = bilinear_sample(2.0, w1, a1, 1.0, w2, a2, 1.0, 8.0, 10.0)
    l3, m1, m2 = bilinear_sample(2.0, w1, 3 * a1, 1.0, w2, 3 * a2, 1.0, 8.0, 10.0)
    assert l3 / (m1 * m2) == pytest.approx(l / (n1 * n2), rel=1e-12)
    dom = DomainSpec(nx=16, ny1=16, ny2=16)
    c = random_smooth_coeffs(dom, 3.0, rng)
    lhs, r1, r2 = leibniz_sides(dom, c, 0.5, 0.5, 0.1, 4)
    lhs3, s1, s2 = leibniz_sides(dom, 3 * c, 0.5, 0.5, 0.1, 4)
    assert lhs3 / (s1 + s2) == pytest.approx(lhs / (r1 + r2), rel=1e-12)


def test_l4_bench_m_exponent():
    Ms = [1 / 16, 1 / 8, 1 / 4, 1 / 2]
    r = bench_l4_strichartz(2.0, [1.0], [0.5], Ms, samples=4, lam=64.0)
    fit = r.add_fit("M")
    assert fit.exponent <= 0.5 + 0.15
    assert abs(fit.exponent - 0.5) <= 0.15
    assert np.all(np.isfinite(r.ratios))


def test_l4_bench_sweep_bounded():
    r = bench_l4_strichartz(2.0, [1.0, 2.0, 4.0], [0.25, 0.5, 1.0], [0.25, 1.0, 4.0], samples=4)
    assert r.samples == 27 * 4
    assert r.max_ratio < 20
    assert len(set(r.seeds)) == r.samples


def test_l4_bench_deterministic():
    a = bench_l4_strichartz(2.0, [1.0], [0.5], [0.25], samples=2, seed=11)
    b = bench_l4_strichartz(2.0, [1.0], [0.5], [0.25], samples=2, seed=11)
    assert a.to_csv() == b.to_csv()


def test_resonant_eta_is_resonant():
    for a in (2.0, 3.0):
        e = resonant_eta(a, 1.0, 8.0)
        assert abs(resonance(a, 1.0, [0.0, 0.0], 8.0, [e, 0.0])) < 1e-9 * kdv_resonance(a, 1.0, 8.0)


def test_bilinear_bench_and_skip():
    hi = BilinearBand(8.0, 1.0, width=0.125)
    r = bench_bilinear_transverse(2.0, BilinearBand(1.0, 0.25), hi, samples=2, smallness=0.25)
    assert r.samples == 2 and not r.skipped
    assert all(0 < rec["trivial_ratio"] < 1 for rec in r.records)
    assert all(rec["max_resonance_ratio"] < 0.25 for rec in r.records)
    strict = bench_bilinear_transverse(2.0, BilinearBand(1.0, 0.25), hi, samples=2, smallness=1e-3)
    assert strict.samples == 0 and "non-resonant" in strict.skipped[0]["reason"]


def test_leibniz_rejects_p():
    with pytest.raises(ValueError):
        bench_leibniz(0.5, 0.5, 0.1, 3, samples=1)
    assert conjugate_exponent(4) == 4.0
    assert conjugate_exponent(6) == 3.0


def test_mixed_norm_constant():
    d = DomainSpec(nx=8, ny1=8, ny2=8)
    v = np.full(d.shape, 2.0)
    lx, ly, _ = d.lengths
    assert mixed_norm(d, v, 2, 4) == pytest.approx(2 * lx**0.5 * (ly * ly) ** 0.25)
    assert mixed_norm(d, v, math.inf, 4) == pytest.approx(2 * (ly * ly) ** 0.25)


def test_leibniz_single_mode():
    d = DomainSpec(nx=16, ny1=16, ny2=16)
    x = np.arange(16) * d.lengths[0] / 16
    y = np.arange(16) * d.lengths[1] / 16
    u = np.cos(3 * x)[:, None, None] + 0 * y[None, :, None]
    c = to_spectral(d, np.broadcast_to(u, d.shape)).coeffs
    lhs, r1, _ = leibniz_sides(d, c, 1.0, 0.5, 0.1, 4)
    assert np.isfinite(lhs / r1) and lhs / r1 <= 4


def test_leibniz_holder_case():
    r = bench_leibniz(0.0, 0.0, 0.1, 4, samples=20)
    assert r.max_ratio <= 1 + 1e-9


def test_leibniz_stable_under_doubling():
    r = bench_leibniz(0.5, 0.5, 0.1, 6, samples=20, seed=2)
    m = max_ratio_by(r, "n")
    assert max(m.values()) < 50
    assert abs(m[32] / m[16] - 1) < 0.2
