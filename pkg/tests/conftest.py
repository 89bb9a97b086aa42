import pytest

_RESULTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the summary prints one line per criterion."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        _RESULTS.append((number, title, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {number:>2} {title}: {detail}")
