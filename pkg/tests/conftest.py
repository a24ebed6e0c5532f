import numpy as np
import pytest

from pmmhpg.models.sv import SvParams
from pmmhpg.rng import new_stream
from pmmhpg.simulate import simulate_sv

SV_TRUE = SvParams(mu=-0.5, phi=0.97, tau2=0.04, rho=-0.3)


def binomial_z(counts, n, p):
    """z-scores of observed counts against Binomial(n, p)."""
    p = np.asarray(p, dtype=float)
    se = np.sqrt(n * p * (1.0 - p))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (np.asarray(counts) - n * p) / se, 0.0)
    return z


@pytest.fixture(scope="session")
def sv_data():
    y, x = simulate_sv(SV_TRUE, 200, new_stream(2024).substream("data"))
    return y, x


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(capsys):
    """Reporter for acceptance criteria: prints one PASS/FAIL line and asserts."""

    def report(number, title, ok, detail, seconds=None):
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        if seconds is not None:
            line += f" [{seconds:.1f} s]"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
