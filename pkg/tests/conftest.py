import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion.

    Call ``criterion(n, ok, detail)``; a test that errors before calling it
    is recorded as a failure.
    """
    calls = []

    def record(n, ok, detail=""):
        calls.append(n)
        _RESULTS[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")

    yield record
    if not calls:
        n = request.node.get_closest_marker("criterion")
        if n is not None:
            _RESULTS.setdefault(n.args[0], (False, f"{request.node.name} raised before reporting"))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}")
