import dataclasses

import numpy as np
import pytest

from blhc.continuation import (
    CorrectorFailure,
    CurvePoint,
    StepMode,
    TraceConfig,
    TraceFailure,
    TraceStats,
    compute_tangent,
    solve_auxiliary,
    trace,
)
from blhc.discretization import Grid, HomotopyKind, HomotopyProblem, TimeStep, make_problem
from blhc.physics import CoreyFlux
from blhc.solver import NewtonConfig, newton_solve

from conftest import first_step_problem

SYM = CoreyFlux(2.0, 2.0, 1.0)
HC_KINDS = ["linear_relperm", "hull", "vanishing_diffusion"]


def _check_curve(problem, points, tol):
    lams = [p.lam for p in points]
    assert lams[0] == 1.0 and lams[-1] == 0.0
    assert all(a > b for a, b in zip(lams, lams[1:]))
    s = [p.arclength for p in points]
    assert s[0] == 0.0 and all(a < b for a, b in zip(s, s[1:]))
    for a, b in zip(points, points[1:]):
        assert float(np.dot(a.tangent, b.tangent)) > 0.0
    for p in points:
        assert np.max(np.abs(problem.residual(p.X, p.lam))) <= tol
        assert abs(np.linalg.norm(p.tangent) - 1.0) <= 1e-10
        assert p.tangent[-1] <= 0.0


def test_config_invariants():
    with pytest.raises(ValueError):
        TraceConfig(dlambda_min=0.5, dlambda_init=0.25)
    with pytest.raises(ValueError):
        TraceConfig(dlambda_max=1.5)
    with pytest.raises(ValueError):
        TraceConfig(shrink=1.0)


def test_linear_auxiliary_is_cheap():
    _, p = first_step_problem("degenerate_injection", "linear_relperm")
    start = solve_auxiliary(p)
    assert start.lam == 1.0 and start.corrector_iters <= 2


def test_hull_auxiliary_converges(scenario_name):
    _, p = first_step_problem(scenario_name, "hull")
    start = solve_auxiliary(p)
    assert np.max(np.abs(p.residual(start.X, 1.0))) <= 1e-9


def test_diffusion_auxiliary_and_zero_beta():
    _, p = first_step_problem("sshape_large_cfl", "vanishing_diffusion")
    solve_auxiliary(p)
    flat = dataclasses.replace(p, beta=0.0)
    with pytest.raises(CorrectorFailure):
        solve_auxiliary(flat)


def test_target_only_has_no_auxiliary():
    _, p = first_step_problem("smooth_small_cfl", "target_only")
    with pytest.raises(ValueError):
        solve_auxiliary(p)


def test_tangent_of_trivial_homotopy():
    grid = Grid(6)
    step = TimeStep(0.05, np.linspace(0.8, 0.2, 6), 0.8)
    p = HomotopyProblem(HomotopyKind.LINEAR_RELPERM, SYM, grid, step, flux_aux=SYM)
    t = compute_tangent(p, step.S_prev, 0.6)
    np.testing.assert_array_equal(t, [0, 0, 0, 0, 0, 0, -1.0])


def test_tangent_orientation_follows_previous():
    _, p = first_step_problem("sshape_large_cfl", "hull")
    start = solve_auxiliary(p)
    flipped = compute_tangent(p, start.X, 1.0, -start.tangent)
    np.testing.assert_allclose(flipped, -start.tangent)


def test_easy_problem_single_step():
    grid = Grid(20)
    lin = CoreyFlux(1.0, 1.0, 1.0)
    step = TimeStep(0.1 * grid.dx, np.zeros(20), 1.0)
    p = make_problem(HomotopyKind.HULL, lin, grid, step)
    points = trace(p, TraceConfig(dlambda_init=1.0))
    assert [q.lam for q in points] == [1.0, 0.0]


@pytest.mark.parametrize("kind", HC_KINDS)
def test_trace_sshape(kind):
    scenario, p = first_step_problem("sshape_large_cfl", kind)
    stats = TraceStats()
    points = trace(p, scenario.trace, stats=stats)
    _check_curve(p, points, scenario.solver.tol_abs)
    assert stats.accepted_steps == len(points)
    assert np.max(np.abs(p.target(points[-1].X))) <= scenario.solver.tol_abs


def test_endpoint_matches_direct_newton():
    scenario, p = first_step_problem("smooth_small_cfl", "hull")
    points = trace(p, scenario.trace)
    direct = newton_solve(p, 0.0, p.step.S_prev, scenario.solver)
    assert direct.converged
    assert np.max(np.abs(points[-1].X - direct.X_final)) <= 1e-7


def test_arclength_mode(scenario_name):
    scenario, p = first_step_problem(scenario_name, "hull")
    cfg = dataclasses.replace(scenario.trace, mode=StepMode.ARCLENGTH, ds=0.1)
    points = trace(p, cfg)
    _check_curve(p, points, scenario.solver.tol_abs)


def test_underflow_reports_last_point():
    scenario, p = first_step_problem("sshape_large_cfl", "hull")
    cfg = TraceConfig(newton=NewtonConfig(max_iter=1), dlambda_min=0.05, dlambda_init=0.5)
    start = solve_auxiliary(p)
    with pytest.raises(TraceFailure) as info:
        trace(p, cfg, start=start)
    assert isinstance(info.value.last_point, CurvePoint)
    assert info.value.last_point.lam > 0.0


def test_trace_from_given_start(quadratic_curve):
    start = CurvePoint(np.array([1.0]), 1.0, compute_tangent(quadratic_curve, np.array([1.0]), 1.0), 0.0, 0)
    points = trace(quadratic_curve, TraceConfig(), start=start)
    for q in points:
        assert q.X[0] == pytest.approx(q.lam**2, abs=1e-12)
