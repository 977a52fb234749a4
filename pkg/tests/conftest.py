from collections import OrderedDict

import pytest

_outcomes = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "skip" if report.skipped else ("pass" if report.passed else "fail")
        previous = _outcomes.get(key)
        rank = {"fail": 2, "pass": 1, "skip": 0}
        if previous is None or rank[status] > rank[previous]:
            _outcomes[key] = status


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_outcomes.items()):
        label = {"pass": "PASS", "fail": "FAIL", "skip": "SKIP (data not supplied)"}[status]
        terminalreporter.write_line(f"criterion {number}: {label}  {title}")
