import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance verdict line."""

    def record(n, ok, detail, skipped=False):
        status = "SKIP" if skipped else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES[n] = f"criterion {n:2d}: {status}  {detail}"
        print(ACCEPTANCE_LINES[n])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
