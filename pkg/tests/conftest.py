import numpy as np
import pytest
from hypothesis import settings

from fbspectral.spectral_core import PhysicalParams, make_grid

settings.register_profile("fbspectral", deadline=None, max_examples=30)
settings.load_profile("fbspectral")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(16, 1.0)


@pytest.fixture(scope="session")
def params():
    return PhysicalParams.from_n(0.7, 1.3, 2.1)


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record a PASS/FAIL line for the acceptance summary."""

    def add(label: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
