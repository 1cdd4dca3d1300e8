"""Shared pytest plumbing: acceptance-criterion result lines.

Tests that exercise a release criterion register a label (and optional
detail) through the ``criterion`` fixture; a summary section at the end of
the run prints one PASS/FAIL/SKIP line per criterion so the outcome is
visible without digging through captured output.
"""

import pytest


def pytest_configure(config):
    config._criterion_lines = []


@pytest.fixture
def criterion(request):
    """Register the acceptance-criterion label for this test."""

    def set_label(label, detail=""):
        request.node._criterion_label = label
        request.node._criterion_detail = detail

    set_label.detail = lambda text: setattr(
        request.node, "_criterion_detail", text)
    return set_label


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    label = getattr(item, "_criterion_label", None)
    if label is None or report.when != "call":
        if (label is not None and report.when == "setup"
                and report.skipped):
            _record(item, label, "SKIP")
        return
    status = ("PASS" if report.passed
              else "SKIP" if report.skipped else "FAIL")
    _record(item, label, status)


def _record(item, label, status):
    detail = getattr(item, "_criterion_detail", "")
    line = f"{label}: {status}"
    if detail:
        line += f" ({detail})"
    item.config._criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
