import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


CRITERIA_RESULTS: dict = {}


@pytest.fixture
def criterion():
    """Record ``(number, title, passed, detail)`` for the acceptance summary."""

    def note(number: int, title: str, passed: bool, detail: str = "") -> None:
        CRITERIA_RESULTS[number] = (title, bool(passed), detail)
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}  {detail}")

    return note


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA_RESULTS):
        title, passed, detail = CRITERIA_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}  {detail}")
