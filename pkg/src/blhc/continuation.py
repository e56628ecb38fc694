"""Predictor-corrector tracing of homotopy curves from lam = 1 down to lam = 0.

The predictor is a first-order Euler step along the unit tangent of the
curve in ``(X, lam)`` space; the corrector is :func:`~blhc.solver.newton_solve`
at the predicted, frozen ``lam``.  Any object with ``residual``, ``jac_X``
and ``jac_lambda`` methods (see :class:`~blhc.discretization.HomotopyProblem`)
can be traced.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .discretization import LAMBDA_TOL
from .solver import NewtonConfig, SingularMatrixError, newton_solve, solve_banded

logger = logging.getLogger(__name__)


class StepMode(str, enum.Enum):
    LAMBDA = "lambda_stepping"
    ARCLENGTH = "arclength_stepping"


@dataclass(frozen=True)
class TraceConfig:
    dlambda_init: float = 0.25
    dlambda_min: float = 1e-4
    dlambda_max: float = 1.0
    grow: float = 1.5
    shrink: float = 0.5
    grow_max_iters: int = 5
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    mode: StepMode = StepMode.LAMBDA
    ds: float = 0.1
    ds_min: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "mode", StepMode(self.mode))
        if not 0.0 < self.dlambda_min <= self.dlambda_init <= self.dlambda_max <= 1.0:
            raise ValueError("need 0 < dlambda_min <= dlambda_init <= dlambda_max <= 1")
        if not (self.grow >= 1.0 and 0.0 < self.shrink < 1.0):
            raise ValueError("need grow >= 1 and 0 < shrink < 1")
        if not 0.0 < self.ds_min <= self.ds:
            raise ValueError("need 0 < ds_min <= ds")


@dataclass
class CurvePoint:
    X: np.ndarray
    lam: float
    tangent: np.ndarray
    arclength: float
    corrector_iters: int

    @property
    def q(self):
        return np.append(self.X, self.lam)


@dataclass
class TraceStats:
    """Work spent in a trace, including rejected corrector attempts."""

    accepted_steps: int = 0
    rejected_steps: int = 0
    newton_iters: int = 0


class CorrectorFailure(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class FoldPointError(RuntimeError):
    """Singular ``dH/dX`` or a tangent that stops decreasing lam."""


class TraceFailure(RuntimeError):
    def __init__(self, message, points):
        super().__init__(message)
        self.points = list(points)

    @property
    def last_point(self):
        return self.points[-1] if self.points else None


def compute_tangent(problem, X, lam, prev_tangent=None):
    """Unit tangent of the curve ``H(X; lam) = 0`` at ``(X, lam)``.

    Solves ``dH/dX t_X = -dH/dlam`` and normalizes ``(t_X, 1)``.  Without a
    previous tangent the result points toward decreasing ``lam``; otherwise it
    has a positive dot product with ``prev_tangent``.
    """
    try:
        t_X = solve_banded(problem.jac_X(X, lam), -np.asarray(problem.jac_lambda(X, lam)))
    except SingularMatrixError as err:
        raise FoldPointError(f"singular dH/dX at lambda={lam}: {err}") from err
    t = np.append(t_X, 1.0)
    t /= np.linalg.norm(t)
    if prev_tangent is None:
        if t[-1] > 0.0:
            t = -t
    elif float(np.dot(t, prev_tangent)) < 0.0:
        t = -t
    return t


def solve_auxiliary(problem, cfg=None):
    """Solve ``H(X; 1) = 0`` from the previous time level; the start of the curve."""
    cfg = cfg or TraceConfig()
    if getattr(problem, "kind", None) is not None and problem.kind.value == "target_only":
        raise ValueError("target_only has no auxiliary problem")
    report = newton_solve(problem, 1.0, problem.step.S_prev, cfg.newton)
    if not report.converged:
        raise CorrectorFailure(
            f"auxiliary problem did not converge ({report.verdict.value})", report
        )
    tangent = compute_tangent(problem, report.X_final, 1.0)
    return CurvePoint(report.X_final, 1.0, tangent, 0.0, report.iterations)


def correct_point(problem, X_pred, lam, newton_cfg, prev):
    """Corrector at frozen ``lam``; returns the new curve point or ``None``."""
    report = newton_solve(problem, lam, X_pred, newton_cfg)
    if not report.converged:
        return None, report
    tangent = compute_tangent(problem, report.X_final, lam, prev.tangent)
    q_new = np.append(report.X_final, lam)
    s = prev.arclength + float(np.linalg.norm(q_new - prev.q))
    return CurvePoint(report.X_final, lam, tangent, s, report.iterations), report


def trace(problem, cfg=None, start=None, stats=None):
    """Trace the homotopy curve from ``lam = 1`` to ``lam = 0``.

    Returns the accepted points in order, both endpoints included.  The last
    step always lands on ``lam = 0`` exactly.  Raises :class:`TraceFailure`
    (carrying the points accepted so far) when the step size underflows or a
    fold point is met.  ``stats``, if given, accumulates the work done.
    """
    cfg = cfg or TraceConfig()
    stats = stats if stats is not None else TraceStats()
    if start is None:
        try:
            point = solve_auxiliary(problem, cfg)
        except CorrectorFailure as err:
            stats.rejected_steps += 1
            stats.newton_iters += err.report.iterations
            raise
    else:
        point = start
    stats.accepted_steps += 1
    stats.newton_iters += point.corrector_iters
    points = [point]
    arclength_mode = cfg.mode is StepMode.ARCLENGTH
    size = cfg.ds if arclength_mode else cfg.dlambda_init
    size_min = cfg.ds_min if arclength_mode else cfg.dlambda_min
    size_max = cfg.ds if arclength_mode else cfg.dlambda_max

    while point.lam > 0.0:
        t_lam = float(point.tangent[-1])
        if t_lam >= -1e-14:
            raise TraceFailure(f"fold point at lambda={point.lam}: tangent does not decrease lambda", points)
        if arclength_mode:
            dlam = -size * t_lam
        else:
            dlam = size
        # land on zero instead of leaving a sliver of lam
        if point.lam - dlam <= (LAMBDA_TOL if arclength_mode else cfg.dlambda_min):
            dlam = point.lam
        lam_new = 0.0 if dlam == point.lam else point.lam - dlam
        h = dlam / -t_lam
        X_pred = point.X + h * point.tangent[:-1]

        try:
            new, report = correct_point(problem, X_pred, lam_new, cfg.newton, point)
        except FoldPointError as err:
            raise TraceFailure(str(err), points) from err

        stats.newton_iters += report.iterations
        if new is None:
            stats.rejected_steps += 1
            size *= cfg.shrink
            logger.debug("corrector failed at lambda=%g (%s), step -> %g", lam_new, report.verdict.value, size)
            if size < size_min:
                raise TraceFailure(f"step size underflow at lambda={point.lam}", points)
            continue

        stats.accepted_steps += 1
        points.append(new)
        point = new
        if report.iterations <= cfg.grow_max_iters:
            size = min(size * cfg.grow, size_max)
    return points
