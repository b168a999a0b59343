import time

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

SUITE_BUDGET = 15 * 60
_start = time.perf_counter()
_criteria = []


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion, then assert it."""

    def check(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        print(line)
        _criteria.append(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _start
    ok = elapsed < SUITE_BUDGET
    print(f"\n[{'PASS' if ok else 'FAIL'}] full suite runtime {elapsed:.0f}s (budget {SUITE_BUDGET}s)")
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1
