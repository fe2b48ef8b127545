"""Shared pytest wiring: one summary line per acceptance criterion."""
from __future__ import annotations

import pytest


def pytest_configure(config):
    config._criterion_lines = {}


@pytest.fixture
def criterion_line(request):
    """Record the measured numbers behind an acceptance criterion."""

    def record(number, message):
        request.config._criterion_lines[number] = message

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            if "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            num = int(rep.nodeid.split("test_criterion_")[1].split("_")[0])
            outcomes[num] = key == "passed"
    if not outcomes:
        return
    lines = getattr(config, "_criterion_lines", {})
    terminalreporter.section("acceptance criteria")
    for num in sorted(outcomes):
        status = "PASS" if outcomes[num] else "FAIL"
        detail = lines.get(num)
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"criterion {num}: {status}{suffix}")
