from __future__ import annotations

from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[int, tuple[str, str]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's outcome for the end-of-run summary.

    Usage: ``criterion(3, "augmentation contract")`` at the top of the test.
    The line reads FAIL unless the test body finishes.
    """
    recorded = []

    def register(number: int, title: str) -> None:
        recorded.append(number)
        _criteria[number] = (title, "FAIL")

    yield register
    rep = getattr(request.node, "rep_call", None)
    for number in recorded:
        title, _ = _criteria[number]
        _criteria[number] = (title, "PASS" if rep is not None and rep.passed else "FAIL")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}")
