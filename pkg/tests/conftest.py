import re

import pytest

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[k] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        status = "PASS" if _ACCEPTANCE[k] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {status}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20261015)
