"""Tridiagonal elimination and plain (undamped) Newton iteration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .physics import EXTENSION_BAND, SaturationDomainError

PIVOT_TOL = 1e-14


class SingularMatrixError(ArithmeticError):
    """Zero pivot during tridiagonal elimination."""


def solve_tridiagonal(sub, diag, sup, rhs):
    """Solve a tridiagonal system by Thomas elimination without pivoting.

    ``sub`` and ``sup`` have length ``n - 1``; ``sub[i]`` multiplies
    ``x[i]`` in row ``i + 1`` and ``sup[i]`` multiplies ``x[i + 1]`` in row ``i``.
    Raises :class:`SingularMatrixError` when a pivot drops below 1e-14 in
    magnitude.
    """
    b = [float(v) for v in diag]
    d = [float(v) for v in rhs]
    a = [float(v) for v in sub]
    c = [float(v) for v in sup]
    n = len(b)
    if len(d) != n or len(a) != n - 1 or len(c) != n - 1:
        raise ValueError("inconsistent band lengths")

    if abs(b[0]) < PIVOT_TOL:
        raise SingularMatrixError("zero pivot in row 0")
    for k in range(1, n):
        m = a[k - 1] / b[k - 1]
        b[k] -= m * c[k - 1]
        d[k] -= m * d[k - 1]
        if abs(b[k]) < PIVOT_TOL:
            raise SingularMatrixError(f"zero pivot in row {k}")

    x = [0.0] * n
    x[-1] = d[-1] / b[-1]
    for k in range(n - 2, -1, -1):
        x[k] = (d[k] - c[k] * x[k + 1]) / b[k]
    return np.array(x)


def solve_banded(J, rhs):
    """Solve with a :class:`~blhc.discretization.Tridiagonal` matrix."""
    return solve_tridiagonal(J.sub, J.diag, J.sup, rhs)


class Verdict(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    DIVERGED_GROWTH = "diverged_growth"
    DOMAIN_ESCAPE = "domain_escape"


@dataclass(frozen=True)
class NewtonConfig:
    tol_abs: float = 1e-9
    tol_step: float = 1e-10
    max_iter: int = 25
    diverge_factor: float = 1e4

    def __post_init__(self):
        if not self.tol_abs > 0.0:
            raise ValueError("tol_abs must be positive")
        if not self.tol_step > 0.0:
            raise ValueError("tol_step must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be an integer >= 1")
        if not self.diverge_factor > 1.0:
            raise ValueError("diverge_factor must exceed 1")


@dataclass
class NewtonReport:
    verdict: Verdict
    iterations: int
    residual_history: list
    X_final: np.ndarray
    message: str = ""
    iterates: list = field(default_factory=list)

    @property
    def converged(self):
        return self.verdict is Verdict.CONVERGED


def _in_band(X):
    lo, hi = EXTENSION_BAND
    return bool(np.all(np.isfinite(X)) and np.all(X >= lo) and np.all(X <= hi))


def newton_solve(problem, lam, X0, cfg=None, keep_iterates=False):
    """Full-step Newton on ``problem.residual(., lam) = 0`` starting from ``X0``.

    The iteration stops as converged once the residual max-norm drops to
    ``tol_abs``.  An update smaller than ``tol_step`` with the residual still
    above ``tol_abs`` means stagnation and ends the run as ``max_iter``.
    Failures are reported in the verdict, never raised; a singular Jacobian
    counts as divergence.
    """
    cfg = cfg or NewtonConfig()
    X = np.array(X0, dtype=float)
    iterates = [X.copy()] if keep_iterates else []

    def report(verdict, k, history, message=""):
        return NewtonReport(verdict, k, history, X, message, iterates)

    if not _in_band(X):
        return report(Verdict.DOMAIN_ESCAPE, 0, [np.inf], "initial guess outside the band")
    R = problem.residual(X, lam)
    r0 = float(np.max(np.abs(R)))
    history = [r0]
    if r0 <= cfg.tol_abs:
        return report(Verdict.CONVERGED, 0, history)

    for k in range(1, cfg.max_iter + 1):
        try:
            dX = solve_banded(problem.jac_X(X, lam), -R)
        except SingularMatrixError as err:
            history.append(np.inf)
            return report(Verdict.DIVERGED_GROWTH, k, history, f"singular Jacobian: {err}")
        X = X + dX
        if keep_iterates:
            iterates.append(X.copy())
        if not _in_band(X):
            history.append(np.inf)
            return report(Verdict.DOMAIN_ESCAPE, k, history)
        try:
            R = problem.residual(X, lam)
        except SaturationDomainError as err:
            history.append(np.inf)
            return report(Verdict.DOMAIN_ESCAPE, k, history, str(err))
        r = float(np.max(np.abs(R)))
        history.append(r)
        if r <= cfg.tol_abs:
            return report(Verdict.CONVERGED, k, history)
        if not np.isfinite(r) or r > cfg.diverge_factor * r0:
            return report(Verdict.DIVERGED_GROWTH, k, history)
        if float(np.max(np.abs(dX))) <= cfg.tol_step:
            return report(Verdict.MAX_ITER, k, history, "stagnated above tol_abs")
    return report(Verdict.MAX_ITER, cfg.max_iter, history)
