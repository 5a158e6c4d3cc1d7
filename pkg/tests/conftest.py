import numpy as np
import pytest

from uplink_isac.numerics import child_rng
from uplink_isac.scenario import ChannelStatistics, SystemConfig, default_scenario


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return scale * (a @ a.conj().T) / rank


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


def random_stats(rng, K, N_b, echo=0.3):
    """Random full-rank R_h plus rank-one R_g; scales of a similar order."""
    R_h = np.stack([random_psd(rng, N_b, scale=rng.uniform(0.5, 2.0)) for _ in range(K)])
    a = np.exp(1j * rng.uniform(0, 2 * np.pi, N_b))
    R_g = np.stack([echo * rng.uniform(0.5, 1.5) * np.outer(a, a.conj()) for _ in range(K)])
    return ChannelStatistics(R_h=R_h, R_g=R_g)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def default_case():
    c = SystemConfig()
    geom, stats = default_scenario(c, child_rng(11, 0))
    return c, geom, stats


@pytest.fixture(scope="session")
def unit_case():
    """Unit-scale statistics where sigma2 and powers are O(1)."""
    r = np.random.default_rng(5)
    c = SystemConfig(K=3, N_b=4, P=1.0, sigma2=0.5, R_th=0.1)
    return c, random_stats(r, 3, 4)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
