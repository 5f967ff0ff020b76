import pytest

_VERDICTS = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict for an acceptance criterion; printed in the terminal summary."""

    def record(number, passed, detail):
        _VERDICTS[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        passed, detail = _VERDICTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
