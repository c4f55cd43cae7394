import pytest

from lostsales.demand import from_pmf, truncate_family

# lines printed by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def two_point():
    return from_pmf([0, 2], [0.5, 0.5])


@pytest.fixture(scope="session")
def geo1():
    return truncate_family("geometric", mean=1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
