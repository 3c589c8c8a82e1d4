import pytest

_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""
    def _report(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title} | {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
