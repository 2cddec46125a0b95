"""Shared fixtures plus the acceptance-criteria reporter.

Acceptance tests register one line per criterion through the `acceptance`
fixture; the terminal summary prints them as PASS/FAIL regardless of how the
individual tests ended.
"""
import pytest

_RESULTS = {}


class AcceptanceRecorder:
    def check(self, number, name, condition, detail=""):
        """Record a criterion verdict, then assert it."""
        _RESULTS[number] = (name, bool(condition), detail)
        assert condition, f"criterion {number} ({name}) failed: {detail}"


@pytest.fixture
def acceptance():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        name, ok, detail = _RESULTS[number]
        verdict = "PASS" if ok else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"criterion {number:2d} {name}: {verdict}{suffix}")
