import pytest

from cusumcps.plant import design_filter
from cusumcps.reactor import reactor_fixture


@pytest.fixture(scope="session")
def reactor():
    return reactor_fixture()


@pytest.fixture(scope="session")
def reactor_design(reactor):
    return design_filter(reactor)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line[1])
