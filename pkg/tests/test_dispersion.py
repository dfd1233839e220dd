import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kpi3.dispersion import (
    DispersionParams,
    grad_omega,
    is_resonant,
    kdv_resonance,
    omega,
    propagate,
    resonance,
    resonance_3d_split,
    resonance_breakdown,
    transverse_term,
)
from kpi3.spectral import DomainSpec, SpectralField, build_grid

from conftest import random_real_field

finite = st.floats(-50, 50, allow_nan=False)
nonzero = finite.filter(lambda v: abs(v) > 1e-2)


def test_params():
    p = DispersionParams(3.0)
    assert p.s_crit == 1.5
    assert p.timescale_exponent == 0.5
    assert p.time_scale(16) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        DispersionParams(1.5)


def test_omega_values():
    assert omega(2, 1.0, [0, 0]) == 1.0
    assert omega(2, 2.0, [2, 2]) == 12.0
    assert omega(2, -1.0, [0, 0]) == -1.0
    with pytest.raises(ValueError):
        omega(2, 0.0, [1, 0])


def test_grad_values():
    assert np.allclose(grad_omega(2, 1.0, [0, 0]), [3, 0, 0])
    assert np.allclose(grad_omega(2, 1.0, [1, 0]), [2, 2, 0])
    with pytest.raises(ValueError):
        grad_omega(2, 0.0, [0, 0])


def test_grad_finite_difference():
    rng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(100):
        a = rng.uniform(2, 4)
        xi = rng.choice([-1, 1]) * rng.uniform(0.5, 3)
        eta = rng.uniform(-3, 3, size=2)
        fd = [(omega(a, xi + h, eta) - omega(a, xi - h, eta)) / (2 * h)]
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd.append((omega(a, xi, eta + e) - omega(a, xi, eta - e)) / (2 * h))
        assert np.max(np.abs(grad_omega(a, xi, eta) - fd)) < 1e-6


def test_breakdown_examples():
    b = resonance_breakdown(2, (1.0, [0, 0]), (1.0, [0, 0]))
    assert (b.kdv_part, b.transverse_part, b.omega_sum) == pytest.approx((6, 0, -6))
    b = resonance_breakdown(2, (1.0, [1, 0]), (1.0, [-1, 0]))
    assert b.transverse_part == pytest.approx(2)
    assert b.omega_sum == pytest.approx(2 + 2 - 8)
    assert not b.resonant
    with pytest.raises(ValueError):
        resonance_breakdown(2, (1.0, [0, 0]), (-1.0, [0, 0]))


@given(
    a=st.floats(2, 4),
    xi1=nonzero,
    xi2=nonzero,
    eta=st.lists(finite, min_size=4, max_size=4),
)
def test_resonance_identity(a, xi1, xi2, eta):
    if abs(xi1 + xi2) < 1e-2:
        return
    e1, e2 = np.array(eta[:2]), np.array(eta[2:])
    om = resonance(a, xi1, e1, xi2, e2)
    kdv = kdv_resonance(a, xi1, xi2)
    tr = transverse_term(xi1, e1, xi2, e2)
    scale = max(abs(om), abs(kdv), abs(tr), 1e-300)
    assert abs(om + kdv - tr) <= 1e-10 * scale


def test_3d_split_examples():
    om2d, shear = resonance_3d_split(2, (1.0, 0.5, 0.0), (2.0, -1.0, 0.0))
    assert shear == 0.0
    assert om2d == pytest.approx(-resonance(2, 1.0, [0.5], 2.0, [-1.0]))
    assert resonance_3d_split(2, (1.0, 0.3, 1.0), (1.0, 0.2, 1.0))[1] == 0.0


@given(a=st.floats(2, 4), k=st.lists(finite, min_size=6, max_size=6))
def test_3d_split_matches_full(a, k):
    k1, k2 = k[:3], k[3:]
    if min(abs(k1[0]), abs(k2[0]), abs(k1[0] + k2[0])) < 1e-2:
        return
    om2d, shear = resonance_3d_split(a, k1, k2)
    full = resonance_breakdown(a, (k1[0], k1[1:]), (k2[0], k2[1:])).omega_sum
    # sum-minus-parts convention: full resonance is -(om2d - shear)
    assert abs((om2d - shear) + full) <= 1e-10 * max(abs(om2d), abs(shear), abs(full), 1e-300)


def test_transversality_at_resonance():
    """|grad w(k1) - grad w(k2)| >= c Nmax^{alpha/2} on exactly resonant pairs."""
    rng = np.random.default_rng(7)
    for a in (2.0, 3.0, 4.0):
        ratios = []
        for _ in range(2000):
            xi1, xi2 = rng.uniform(0.5, 64, size=2) * rng.choice([-1, 1])
            e1 = rng.uniform(-10, 10, size=2)
            u = rng.standard_normal(2)
            u /= np.linalg.norm(u)
            d = math.sqrt(kdv_resonance(a, xi1, xi2) * (xi1 + xi2) / (xi1 * xi2))
            e2 = xi2 * (e1 / xi1 - d * u)
            assert is_resonant(a, xi1, e1, xi2, e2)
            gap = np.linalg.norm(grad_omega(a, xi1, e1) - grad_omega(a, xi2, e2))
            ratios.append(gap / max(abs(xi1), abs(xi2)) ** (a / 2))
        c = min(ratios)
        assert c > 0.5, (a, c)


def _mode(d, j, amp=1.0):
    c = np.zeros(d.shape, dtype=complex)
    c[j] = amp
    c[tuple(-i for i in j)] = np.conj(amp)
    return SpectralField(d, c)


def test_propagate_examples(dom16):
    f = _mode(dom16, (1, 0, 0))
    assert propagate(f, 0.0, 2) is f
    g = propagate(f, math.pi, 2)
    assert g.coeffs[1, 0, 0] == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(ValueError):
        propagate(f + _mode(dom16, (0, 1, 0)), 0.1, 2)


@given(seed=st.integers(0, 10**6), alpha=st.floats(2, 4))
def test_propagate_unitary_group(seed, alpha):
    d = DomainSpec(lam=2.0, alpha=alpha, nx=8, ny1=8, ny2=8)
    f = random_real_field(d, seed)
    g = propagate(f, 0.3, alpha)
    assert g.l2() == pytest.approx(f.l2(), rel=1e-12)
    two = propagate(g, 0.7, alpha)
    one = propagate(f, 1.0, alpha)
    assert np.max(np.abs(two.coeffs - one.coeffs)) < 1e-12 * np.max(np.abs(f.coeffs))
    assert g.hermitian_defect() < 1e-12


def test_symbol_zero_on_mean_plane(dom16):
    from kpi3.dispersion import omega_symbol

    om = omega_symbol(build_grid(dom16), 2.0)
    assert not np.any(om[0])
    assert not np.any(om[8])
