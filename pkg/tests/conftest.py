"""Shared pytest plumbing: the acceptance-criterion result banner.

Acceptance tests carry a `criterion(n)` marker and may stash a measured
one-liner in CRITERION_NOTES before asserting. After the run, one line per
criterion is printed so the pass/fail state of each numbered requirement is
readable without digging through the test log.
"""

from __future__ import annotations

import pytest

# criterion number -> short measured detail, filled in by tests as they run
CRITERION_NOTES: dict[int, str] = {}

_RESULTS: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n): acceptance criterion number this test asserts"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call":
        _RESULTS[n] = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    elif report.when == "setup" and not report.passed:
        _RESULTS[n] = "SKIP" if report.skipped else "FAIL (setup)"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        note = CRITERION_NOTES.get(n, "")
        line = f"criterion {n:2d} {_RESULTS[n]}" + (f": {note}" if note else "")
        terminalreporter.write_line(line)
