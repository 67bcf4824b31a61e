import pytest

from safegrid.env import EnvConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def default_env():
    return EnvConfig()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
