import pytest

LAMBDA_28 = 299_792_458 / 28e9
LAMBDA_60 = 299_792_458 / 60e9

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record_acceptance():
    """Store a one-line verdict for an acceptance criterion, printed after the run."""

    def record(number: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
