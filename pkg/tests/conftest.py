"""Reports one pass/fail line per acceptance criterion at the end of the run."""

import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number = marker.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else "FAIL"
    previous = _RESULTS.get(number)
    # a criterion spread over several tests passes only if all of them pass
    if previous is None or previous[0] == "PASS":
        _RESULTS[number] = (status, (previous[1] + "; " if previous and previous[1] else "") + detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, detail = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
