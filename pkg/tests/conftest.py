import pytest

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def acceptance():
    """Record the outcome of one acceptance criterion: ``acceptance(number, passed, detail)``."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = ("PASS" if passed else "FAIL", detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}")
