import pytest

from linpeb.link_budget import RadioConfig

#: lines recorded by the acceptance module, echoed after the test summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def radio():
    return RadioConfig()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
