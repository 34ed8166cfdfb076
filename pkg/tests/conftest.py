import pytest

_LINES = {}


@pytest.fixture
def report_criterion():
    """Record one pass/fail line per acceptance criterion; printed at the end of the run."""
    def record(number, passed, detail):
        _LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_LINES):
        terminalreporter.write_line(_LINES[k])
