import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; all lines are echoed at the end of the run."""

    def _emit(number: int, passed: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(line)
        _LINES.append(line)

    return _emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
