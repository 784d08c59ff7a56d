import math

import numpy as np
import pytest

from mvsde import monotone_ops as ops
from mvsde.coefficients import CoefficientSpec, ConstantDiffusion, MeanFieldLinear, Perturbation
from mvsde.particle_solver import PointMass, SdeSystem

HALF_LINE = ops.NormalCone(ops.Box([0.0], [math.inf]))


def mean_field(theta=1.0, a=0.25, s=0.5, c_b=0.0, c_sigma=0.0, d=1):
    return CoefficientSpec(MeanFieldLinear(theta, a), ConstantDiffusion(s * np.eye(d)), d,
                           Perturbation(c_b, c_sigma))


def reflected_ou(theta=1.0, a=0.25, s=0.5, c_b=0.0, initial=None):
    return SdeSystem(HALF_LINE, mean_field(theta, a, s, c_b),
                     initial if initial is not None else PointMass([0.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One summary line per acceptance criterion, printed after the run.
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        previous = _CRITERIA.get(number, (title, "passed"))[1]
        _CRITERIA[number] = (title, report.outcome if previous == "passed" else previous)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome = _CRITERIA[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{verdict}] {title}")
