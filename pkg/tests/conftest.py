import sys

import pytest

from distill_scaling import laws


@pytest.fixture
def sc():
    return laws.REFERENCE_SUPERVISED


@pytest.fixture
def dc():
    return laws.REFERENCE_DISTILL


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
