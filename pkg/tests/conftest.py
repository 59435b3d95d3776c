"""Shared test plumbing: per-criterion verdict lines for the acceptance suite."""

import contextlib

import pytest

_RESULTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion's PASS/FAIL verdict."""

    @contextlib.contextmanager
    def tracker(number: int, label: str):
        try:
            yield
        except BaseException:
            _RESULTS[number] = (label, "FAIL")
            raise
        _RESULTS[number] = (label, "PASS")

    return tracker


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        label, verdict = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number} ({label}): {verdict}")
