"""Collects acceptance outcomes and prints one line per criterion after the run."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = detail or rep.longrepr[2]
        _RESULTS[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status, detail = _RESULTS[number]
        line = f"criterion {number}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
