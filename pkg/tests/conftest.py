import re

import numpy as np
import pytest

from gspace.network import Architecture

# small nets used across the suites; every one is cheap to enumerate
SMALL_ARCHS = ["2,1,2", "3,2", "2,2,2", "3,4,2", "2,3,2,2", "3,3,3,3"]

FIG1_W = np.array([2.0, -1.0, 0.5, 3.0])

_acceptance: dict[int, list[tuple[str, str]]] = {}


@pytest.fixture
def fig1():
    return Architecture([2, 1, 2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.setdefault(int(match.group(1)), []).append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_acceptance):
        outcomes = [o for _, o in _acceptance[k]]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({len(outcomes)} test(s))")
