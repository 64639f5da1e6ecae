import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args[0]


def pytest_runtest_logreport(report):
    """Keep the worst outcome seen for each criterion-marked test."""
    num = getattr(report, "criterion", None)
    if num is None:
        return
    if report.failed or (report.when == "call" and _CRITERIA.get(num, ("", ""))[1] != "failed"):
        _CRITERIA[num] = (report.nodeid, report.outcome)
    elif report.skipped and num not in _CRITERIA:
        _CRITERIA[num] = (report.nodeid, "skipped")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        nodeid, outcome = _CRITERIA[num]
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {nodeid.split('::')[-1]}")
