import numpy as np
import pytest

from nfimaging.geometry import build_channel_tables, build_geometry


def make_tables(m_tx=6, m_rx=6, cells=3, n_sub=2, side=4.0, carrier_hz=50e9, **kw):
    geo = build_geometry(m_tx=m_tx, m_rx=m_rx, cells_per_side=cells, n_subcarriers=n_sub,
                         roi_side=side, carrier_hz=carrier_hz, **kw)
    return build_channel_tables(geo)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_tables():
    return make_tables()


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hpd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(crandn(rng, n, n))
    ev = np.linspace(1.0, cond, n)
    return (q * ev) @ q.conj().T


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
