import math

import numpy as np
import pytest

from mellinstop.processes import bessel
from mellinstop.stopping_times import make_stopping_time


@pytest.fixture(scope="session")
def gamma21():
    return make_stopping_time("gamma", shape=2, rate=1)


@pytest.fixture(scope="session")
def bessel5():
    return bessel(5)


def within_se(values, target, k=4.0):
    """Whether the mean of ``values`` is within ``k`` standard errors of ``target``.

    Complex values are checked on each component separately.
    """
    arr = np.asarray(values)
    if np.iscomplexobj(arr):
        return within_se(arr.real, complex(target).real, k) and within_se(arr.imag, complex(target).imag, k)
    se = arr.std(ddof=1) / math.sqrt(arr.size)
    return bool(abs(arr.mean() - target) <= k * se)


_CRITERIA = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        passed = report.outcome == "passed" and not hasattr(report, "wasxfail")
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[name] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        passed, detail = _CRITERIA[name]
        number = int(name.split("_")[2])
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
