"""Entropy solution of the Buckley-Leverett Riemann problem.

The self-similar solution ``S(x / t)`` follows from the envelope of the flux
between the two states (concave if the left state is larger, convex
otherwise): chords of the envelope are shocks moving at the chord slope,
stretches where it touches the flux are rarefaction fans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import DEFAULT_HULL_SAMPLES, build_hull

INVERSION_TOL = 1e-10


@dataclass(frozen=True)
class Shock:
    speed: float
    S_minus: float  # state behind (left of) the shock
    S_plus: float  # state ahead of it


@dataclass(frozen=True)
class Rarefaction:
    S_from: float  # left-edge state
    S_to: float  # right-edge state
    speed_from: float
    speed_to: float


@dataclass(frozen=True)
class RiemannSolution:
    flux: object
    S_left: float
    S_right: float
    waves: tuple

    @property
    def speeds(self):
        """Wave speeds left to right: one per shock, both edges per fan."""
        out = []
        for w in self.waves:
            if isinstance(w, Shock):
                out.append(w.speed)
            else:
                out.extend((w.speed_from, w.speed_to))
        return out


def solve_riemann(flux, S_left, S_right, n_samples=DEFAULT_HULL_SAMPLES):
    """Wave structure of the entropy solution for left state ``S_left`` and right state ``S_right``."""
    lo, hi = min(S_left, S_right), max(S_left, S_right)
    hull = build_hull(flux, S_left, S_right, n_samples, domain=(lo, hi))
    segments = list(hull.segments())
    # Walk from the left state toward the right state; speeds then increase.
    if S_left > S_right:
        segments = [(b, a, lin) for a, b, lin in reversed(segments)]
    waves = []
    for S_a, S_b, lin in segments:
        if lin:
            speed = (float(flux.f(S_a)) - float(flux.f(S_b))) / (S_a - S_b)
            waves.append(Shock(speed, S_a, S_b))
        else:
            waves.append(Rarefaction(S_a, S_b, float(flux.df(S_a)), float(flux.df(S_b))))
    return RiemannSolution(flux, float(S_left), float(S_right), tuple(waves))


def _invert_speed(flux, fan, xi):
    """Saturations inside ``fan`` whose characteristic speeds are ``xi`` (array)."""
    a = np.full(np.shape(xi), fan.S_from)
    b = np.full(np.shape(xi), fan.S_to)
    # f' moves monotonically from speed_from to speed_to across the fan
    while np.max(np.abs(b - a), initial=0.0) > INVERSION_TOL:
        m = 0.5 * (a + b)
        below = flux.df(m) < xi
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    return 0.5 * (a + b)


def eval_solution(sol: RiemannSolution, x, t):
    """Saturation at position(s) ``x`` and time ``t > 0``."""
    if not t > 0.0:
        raise ValueError("t must be positive")
    xi = np.atleast_1d(np.asarray(x, dtype=float)) / t
    out = np.full_like(xi, sol.S_right)
    todo = np.ones(xi.shape, dtype=bool)
    for w in sol.waves:
        if isinstance(w, Shock):
            hit = todo & (xi < w.speed)
            out[hit] = w.S_minus
        else:
            ahead = todo & (xi < w.speed_from)
            out[ahead] = w.S_from
            hit = todo & ~ahead & (xi <= w.speed_to)
            if hit.any():
                out[hit] = _invert_speed(sol.flux, w, xi[hit])
            hit |= ahead
        todo &= ~hit
    return out if np.ndim(x) else float(out[0])


def cell_averages(sol: RiemannSolution, grid, t, n_sub=16):
    """Exact cell averages by midpoint quadrature with ``n_sub`` points per cell."""
    offsets = (np.arange(n_sub) + 0.5) / n_sub
    x = (np.arange(grid.n_cells)[:, None] + offsets[None, :]) * grid.dx
    return eval_solution(sol, x.ravel(), t).reshape(grid.n_cells, n_sub).mean(axis=1)


def godunov_reference(flux, S_left, S_right, length, t_end, n_cells, cfl=0.4):
    """Explicit Godunov scheme on ``[0, length]`` with inflow ``S_left``.

    Independent check of :func:`eval_solution`; valid for nondecreasing flux,
    where the Godunov flux reduces to upwinding.
    """
    dx = length / n_cells
    S = np.full(n_cells, float(S_right))
    max_speed = float(np.max(np.abs(flux.df(np.linspace(0.0, 1.0, 2049)))))
    n_steps = int(np.ceil(t_end * max_speed / (cfl * dx)))
    dt = t_end / n_steps
    f_in = float(flux.f(S_left))
    for _ in range(n_steps):
        fS = flux.f(S)
        upstream = np.concatenate(([f_in], fS[:-1]))
        S = S - dt / dx * (fS - upstream)
    return S
