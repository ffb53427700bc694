from __future__ import annotations

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


@pytest.fixture
def measured(request):
    """Attach measured quantities to the acceptance summary line."""

    def record(**values):
        for key, value in values.items():
            request.node.user_properties.append((key, value))

    return record


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _RESULTS.setdefault(number, {"title": title, "passed": True, "ran": False, "values": {}})
    if report.when == "call" or report.failed:
        entry["ran"] = entry["ran"] or report.when == "call"
        entry["passed"] = entry["passed"] and not report.failed
        entry["values"].update(dict(report.user_properties))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report._criterion = tuple(marker.args)


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["passed"] and entry["ran"] else "FAIL"
        detail = ", ".join(f"{k}={_fmt(v)}" for k, v in entry["values"].items())
        line = f"criterion {number}: {status}  {entry['title']}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
