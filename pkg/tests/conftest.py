import numpy as np
import pytest

from nestedheat.geometry import load_spec


@pytest.fixture(scope="session")
def gasket():
    return load_spec("gasket")


@pytest.fixture(scope="session")
def snowflake():
    return load_spec("snowflake")


@pytest.fixture(scope="session")
def pentagasket():
    return load_spec("pentagasket")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Records one summary line per acceptance criterion."""

    def record(number, ok, text):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}"
        _ACCEPTANCE.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
