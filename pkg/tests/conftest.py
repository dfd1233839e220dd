import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kpi3.spectral import DomainSpec, to_spectral, project_mean_zero

settings.register_profile(
    "kpi3",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("kpi3")


def random_real_field(domain, seed=0, mean_zero=True):
    rng = np.random.default_rng(seed)
    f = to_spectral(domain, rng.standard_normal(domain.shape))
    return project_mean_zero(f) if mean_zero else f


def smooth_field(domain, seed=0, amplitude=1.0, kmax=3):
    """Real mean-zero field made of a few low modes with random amplitudes."""
    rng = np.random.default_rng(seed)
    g_x, g_1, g_2 = [np.arange(n) * (L / n) for n, L in zip(domain.shape, domain.lengths)]
    x, y1, y2 = np.meshgrid(g_x, g_1, g_2, indexing="ij")
    u = np.zeros(domain.shape)
    for _ in range(6):
        jx = rng.integers(1, kmax + 1)
        j1, j2 = rng.integers(-kmax, kmax + 1, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        u += rng.standard_normal() * np.cos(jx * x / domain.nu + (j1 * y1 + j2 * y2) / domain.lam + phase)
    return project_mean_zero(to_spectral(domain, amplitude * u))


@pytest.fixture
def dom16():
    return DomainSpec(nx=16, ny1=16, ny2=16)


# One PASS/FAIL line per acceptance criterion, printed after the run.
ACCEPTANCE: dict = {}


def record(number, title, ok, detail=""):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")
