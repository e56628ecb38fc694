"""Traceability measures along a homotopy curve.

* curvature ``kappa(s) = |q''(s)|`` of the arclength-parametrized curve
  ``q(s) = (X(s), lam(s))``, from central differences of unit tangents;
* admissible predictor radius ``r(s)``: the longest prefix of the tangent
  ray along which Newton converges from every predicted point, and its
  normalization ``r_tilde = r |lam'| / lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .continuation import CurvePoint, FoldPointError, compute_tangent
from .solver import NewtonConfig, newton_solve


@dataclass(frozen=True)
class MetricsConfig:
    ds: float = 0.1
    n_gamma: int = 32
    fd_step: float | None = None  # defaults to ds / 2

    def __post_init__(self):
        if not self.ds > 0.0:
            raise ValueError("ds must be positive")
        if int(self.n_gamma) != self.n_gamma or self.n_gamma < 8:
            raise ValueError("n_gamma must be an integer >= 8")
        if self.fd_step is not None and not self.fd_step > 0.0:
            raise ValueError("fd_step must be positive")

    @property
    def resolved_fd_step(self):
        return self.ds / 2.0 if self.fd_step is None else self.fd_step


@dataclass
class MetricsRecord:
    s: float
    lam: float
    kappa: float  # nan where the offset points could not be corrected
    r: float
    r_tilde: float
    gamma_max: float
    err_scale: float  # s_tot**2 * kappa
    samples_failed_at: float | None = None


def _offset_point(problem, point, h, newton_cfg):
    lam = point.lam + h * float(point.tangent[-1])
    if not 0.0 <= lam <= 1.0:
        return None
    X_pred = point.X + h * point.tangent[:-1]
    report = newton_solve(problem, lam, X_pred, newton_cfg)
    if not report.converged:
        return None
    try:
        tangent = compute_tangent(problem, report.X_final, lam, point.tangent)
    except FoldPointError:
        return None
    return np.append(report.X_final, lam), tangent


def curvature(problem, point: CurvePoint, fd_step, newton_cfg=None):
    """Curvature at ``point`` from tangents at the curve points ``s -/+ fd_step``.

    The tangent difference is divided by the chord between the two corrected
    points, which is exact on circles.  Returns ``nan`` if either offset point
    falls outside ``lam`` in [0, 1] or its corrector fails.
    """
    newton_cfg = newton_cfg or NewtonConfig()
    ahead = _offset_point(problem, point, fd_step, newton_cfg)
    behind = _offset_point(problem, point, -fd_step, newton_cfg)
    if ahead is None or behind is None:
        return math.nan
    (q_a, t_a), (q_b, t_b) = ahead, behind
    chord = float(np.linalg.norm(q_a - q_b))
    if chord == 0.0:
        return math.nan
    return float(np.linalg.norm(t_a - t_b)) / chord


def predictor_radius(problem, point: CurvePoint, newton_cfg=None, n_gamma=32):
    """Admissible predictor length along the tangent ray at ``point``.

    Returns ``(r, r_tilde, gamma_max, failed_at)``.  The ray is probed at
    ``gamma_max * j / n_gamma`` for ``j = 1..n_gamma`` where ``gamma_max`` is
    the step that brings the predicted ``lam`` to zero; probing stops at the
    first ``gamma`` whose Newton solve does not converge.
    """
    newton_cfg = newton_cfg or NewtonConfig()
    t_lam = float(point.tangent[-1])
    if not point.lam > 0.0 or t_lam == 0.0:
        raise ValueError("predictor radius needs lam > 0 and a tangent that changes lam")
    gamma_max = point.lam / abs(t_lam)
    r, failed_at = 0.0, None
    for j in range(1, n_gamma + 1):
        gamma = gamma_max * j / n_gamma
        lam = 0.0 if j == n_gamma else max(point.lam + gamma * t_lam, 0.0)
        X_pred = point.X + gamma * point.tangent[:-1]
        if not newton_solve(problem, lam, X_pred, newton_cfg).converged:
            failed_at = gamma
            break
        r = gamma
    r_tilde = 1.0 if r == gamma_max else min(r * abs(t_lam) / point.lam, 1.0)
    return r, r_tilde, gamma_max, failed_at


def sweep_metrics(problem, points, cfg=None, newton_cfg=None):
    """One :class:`MetricsRecord` per interior point of an arclength-stepped trace."""
    cfg = cfg or MetricsConfig()
    newton_cfg = newton_cfg or NewtonConfig()
    s_tot = points[-1].arclength if points else 0.0
    records = []
    for point in points[1:-1]:
        kappa = curvature(problem, point, cfg.resolved_fd_step, newton_cfg)
        r, r_tilde, gamma_max, failed_at = predictor_radius(problem, point, newton_cfg, cfg.n_gamma)
        records.append(
            MetricsRecord(
                s=point.arclength,
                lam=point.lam,
                kappa=kappa,
                r=r,
                r_tilde=r_tilde,
                gamma_max=gamma_max,
                err_scale=s_tot**2 * kappa,
                samples_failed_at=failed_at,
            )
        )
    return records, s_tot
