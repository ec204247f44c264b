import numpy as np
import pytest

from torus_vortex.green import default_table


@pytest.fixture(scope="session")
def table():
    """Default 1024 table, shared by the whole run."""
    return default_table()


@pytest.fixture(scope="session")
def coarse_table():
    return default_table(256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def accept():
    """Record one acceptance line: accept(number, passed, detail, seconds)."""
    def record(number, passed, detail, seconds):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}  [{seconds:.1f} s]"
        _ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
