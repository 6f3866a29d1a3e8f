import os
from collections import OrderedDict

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_CRITERIA = OrderedDict()
_NOTES = {}


@pytest.fixture
def note(request):
    """Attach a one-line measurement summary to the current criterion."""
    marker = request.node.get_closest_marker("criterion")

    def _note(text):
        if marker is not None:
            _NOTES.setdefault(marker.args[0], []).append(text)

    return _note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    failed = report.failed
    if report.when == "call" or failed:
        prev = _CRITERIA.get(n, True)
        _CRITERIA[n] = prev and not failed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        verdict = "PASS" if _CRITERIA[n] else "FAIL"
        detail = "; ".join(_NOTES.get(n, []))
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {detail}".rstrip())


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)
