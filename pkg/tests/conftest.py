import pytest

from aucner.synthetic import make_splits

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def splits():
    return make_splits()


@pytest.fixture(scope="session")
def report_line():
    """Record one PASS/FAIL line; all lines are echoed in the terminal summary."""

    def add(number: int, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
