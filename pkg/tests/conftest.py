"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import pytest

_ACCEPTANCE_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(ident, description): acceptance criterion metadata"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call":
        ident, description = marker.args
        status = "PASS" if report.passed else "FAIL"
        _ACCEPTANCE_RESULTS[item.nodeid] = (f"criterion {ident}", f"{status}: {description}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_ACCEPTANCE_RESULTS):
        label, message = _ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{label} {message}")
