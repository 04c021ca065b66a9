import pytest

_CRITERIA: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion; lines are echoed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA.append((number, bool(ok), detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
