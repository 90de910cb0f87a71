import pytest

ACCEPTANCE_LINES: list = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``."""

    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append((number, "PASS" if ok else "FAIL", detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
