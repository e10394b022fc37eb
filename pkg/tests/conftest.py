import pytest

from rpquant.measure import cantor_measure
from rpquant.rpifs import cantor_spec


@pytest.fixture(scope="session")
def spec():
    return cantor_spec()


@pytest.fixture(scope="session")
def measure():
    return cantor_measure()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record():
    """Log one acceptance line, then fail the test if the criterion did not hold."""

    def _record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _record
