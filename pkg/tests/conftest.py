import sys

import numpy as np
import pytest

from blhc.discretization import Tridiagonal
from blhc.experiments import build_problem
from blhc.scenario import bundled_scenarios, load_scenario


class QuadraticCurve:
    """One unknown with ``H(X; lam) = X - lam**2``; the curve is ``X = lam**2``."""

    def residual(self, X, lam):
        return np.asarray(X, dtype=float) - lam**2

    def jac_X(self, X, lam):
        return Tridiagonal(np.zeros(0), np.ones(1), np.zeros(0))

    def jac_lambda(self, X, lam):
        return np.array([-2.0 * lam])


@pytest.fixture
def quadratic_curve():
    return QuadraticCurve()


def first_step_problem(name, kind=None, overrides=()):
    scenario = load_scenario(name, overrides)
    if kind is not None:
        scenario = scenario.with_kind(kind)
    return scenario, build_problem(scenario, scenario.initial_saturation())


@pytest.fixture(params=bundled_scenarios())
def scenario_name(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
