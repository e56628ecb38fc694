"""Fractional flow functions for the Buckley-Leverett problem.

Three flux families are provided:

* :class:`CoreyFlux` -- power-law relative permeabilities,
  ``f(S) = S**n_w / (S**n_w + M (1 - S)**n_n)``;
* linear relative permeabilities, obtained via :func:`linearized_flux`;
* :class:`HullFlux` -- the upper concave or lower convex envelope of a flux,
  built numerically by :func:`build_hull`.

All flux objects expose ``f``, ``df`` and ``d2f``. By default they reject
saturations outside ``[0, 1]``; with ``extended=True`` they accept the band
``[-0.1, 1.1]`` and continue ``f`` linearly (C1) beyond the physical range,
which keeps Newton Jacobians defined when iterates overshoot.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DOMAIN_TOL = 1e-12
EXTENSION_BAND = (-0.1, 1.1)
DEFAULT_HULL_SAMPLES = 1024
TANGENCY_TOL = 1e-10
GAP_TOL = 1e-14


class SaturationDomainError(ValueError):
    """A saturation lies outside the admissible evaluation range."""


def check_saturation(S, extended=False):
    """Return ``S`` as a float array, raising if it leaves the admissible range."""
    S = np.asarray(S, dtype=float)
    lo, hi = EXTENSION_BAND if extended else (0.0, 1.0)
    if np.any(np.isnan(S)):
        raise SaturationDomainError("saturation is NaN")
    if np.any(S < lo - DOMAIN_TOL) or np.any(S > hi + DOMAIN_TOL):
        raise SaturationDomainError(
            f"saturation outside [{lo}, {hi}]: min={S.min():.6g}, max={S.max():.6g}"
        )
    return S


class _Flux:
    """Shared C1-extension logic; subclasses implement ``_f``, ``_df``, ``_d2f`` on [0, 1]."""

    def _f(self, S):
        raise NotImplementedError

    def _df(self, S):
        raise NotImplementedError

    def _d2f(self, S):
        raise NotImplementedError

    def f(self, S, extended=False):
        S = check_saturation(S, extended)
        inner = np.clip(S, 0.0, 1.0)
        val = self._f(inner)
        if extended:
            val = np.where(S < 0.0, self._f(0.0) + self._df(0.0) * S, val)
            val = np.where(S > 1.0, self._f(1.0) + self._df(1.0) * (S - 1.0), val)
        return val

    def df(self, S, extended=False):
        S = check_saturation(S, extended)
        return self._df(np.clip(S, 0.0, 1.0))

    def d2f(self, S, extended=False):
        S = check_saturation(S, extended)
        val = self._d2f(np.clip(S, 0.0, 1.0))
        if extended:
            val = np.where((S < 0.0) | (S > 1.0), 0.0, val)
        return val


def _power(x, p):
    # 0**0 == 1 is what we want; negative exponents only meet x == 0 when the
    # true derivative is singular.
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.power(x, p)


@dataclass(frozen=True)
class CoreyFlux(_Flux):
    """Corey fractional flow with exponents ``n_w``, ``n_n`` and viscosity ratio ``M``."""

    n_w: float = 2.0
    n_n: float = 2.0
    M: float = 1.0

    def __post_init__(self):
        if not self.n_w >= 1.0:
            raise ValueError(f"n_w must be >= 1, got {self.n_w}")
        if not self.n_n >= 1.0:
            raise ValueError(f"n_n must be >= 1, got {self.n_n}")
        if not self.M > 0.0:
            raise ValueError(f"M must be > 0, got {self.M}")

    def _parts(self, S):
        """Return a, a', a'', b, b', b'' with f = a / (a + b)."""
        nw, nn, M = self.n_w, self.n_n, self.M
        S = np.asarray(S, dtype=float)
        T = 1.0 - S
        a = _power(S, nw)
        a1 = nw * _power(S, nw - 1.0)
        a2 = np.zeros_like(S) if nw == 1.0 else nw * (nw - 1.0) * _power(S, nw - 2.0)
        b = M * _power(T, nn)
        b1 = -M * nn * _power(T, nn - 1.0)
        b2 = np.zeros_like(S) if nn == 1.0 else M * nn * (nn - 1.0) * _power(T, nn - 2.0)
        return a, a1, a2, b, b1, b2

    def _f(self, S):
        a, _, _, b, _, _ = self._parts(S)
        return a / (a + b)

    def _df(self, S):
        a, a1, _, b, b1, _ = self._parts(S)
        return (a1 * b - a * b1) / (a + b) ** 2

    def _d2f(self, S):
        a, a1, a2, b, b1, b2 = self._parts(S)
        den = a + b
        num = a1 * b - a * b1
        with np.errstate(invalid="ignore"):
            return (a2 * b - a * b2) / den**2 - 2.0 * num * (a1 + b1) / den**3


def eval_corey(flux: CoreyFlux, S, extended=False):
    return flux.f(S, extended)


def eval_corey_d1(flux: CoreyFlux, S, extended=False):
    return flux.df(S, extended)


def eval_corey_d2(flux: CoreyFlux, S, extended=False):
    return flux.d2f(S, extended)


def linearized_flux(flux: CoreyFlux) -> CoreyFlux:
    """Linear relative permeabilities with the same viscosity ratio."""
    return CoreyFlux(n_w=1.0, n_n=1.0, M=flux.M)


class HullOrientation(str, enum.Enum):
    CONCAVE_UPPER = "concave_upper"
    CONVEX_LOWER = "convex_lower"


class DegenerateStateError(ValueError):
    """Left and right states coincide, so there is no wave direction."""


@dataclass(frozen=True)
class HullFlux(_Flux):
    """Piecewise envelope of ``base``: linear on some segments, ``base`` itself elsewhere.

    ``breakpoints`` are the ``(S, f)`` knots; ``linear[i]`` tells whether the
    segment between knots ``i`` and ``i + 1`` is a straight chord.  Outside the
    knot range the base flux is used.
    """

    base: object
    orientation: HullOrientation
    breakpoints: tuple
    linear: tuple

    @property
    def knots(self):
        return np.array([p[0] for p in self.breakpoints])

    def segments(self):
        """Yield ``(S_a, S_b, is_linear)`` for every segment, left to right."""
        for (sa, _), (sb, _), lin in zip(self.breakpoints[:-1], self.breakpoints[1:], self.linear):
            yield sa, sb, lin

    def _locate(self, S):
        S = np.asarray(S, dtype=float)
        knots = self.knots
        idx = np.clip(np.searchsorted(knots, S, side="right") - 1, 0, len(self.linear) - 1)
        fa = np.array([p[1] for p in self.breakpoints])
        slopes = np.diff(fa) / np.diff(knots)
        lin = np.asarray(self.linear)[idx] & (S >= knots[0]) & (S <= knots[-1])
        return S, idx, lin, knots, fa, slopes

    def _f(self, S):
        S, idx, lin, knots, fa, _ = self._locate(S)
        # convex weights reproduce the knot values exactly
        w = (S - knots[idx]) / (knots[idx + 1] - knots[idx])
        chord = (1.0 - w) * fa[idx] + w * fa[idx + 1]
        return np.where(lin, chord, self.base.f(S))

    def _df(self, S):
        S, idx, lin, _, _, slopes = self._locate(S)
        return np.where(lin, slopes[idx], self.base.df(S))

    def _d2f(self, S):
        S, idx, lin, _, _, _ = self._locate(S)
        with np.errstate(invalid="ignore"):
            return np.where(lin, 0.0, self.base.d2f(S))


def eval_hull(hull: HullFlux, S, extended=False):
    return hull.f(S, extended)


def eval_hull_d1(hull: HullFlux, S, extended=False):
    return hull.df(S, extended)


def _upper_chain(x, y, tol):
    """Indices of the upper hull of points sorted by ``x`` (Andrew's monotone chain)."""
    stack = []
    for i in range(len(x)):
        while len(stack) >= 2:
            o, a = stack[-2], stack[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            # collinear points are dropped so straight stretches become one chord
            if cross >= -tol:
                stack.pop()
            else:
                break
        stack.append(i)
    return stack


def _tangency_gap(flux, S, anchor):
    """Zero where the tangent of ``flux`` at ``S`` passes through the anchor point."""
    return float(flux.df(S)) * (S - anchor) - (float(flux.f(S)) - float(flux.f(anchor)))


def _refine_tangency(flux, anchor, guess, grid, direction, sign, tol=TANGENCY_TOL):
    """Move a chord end onto the point where the tangent of ``flux`` meets ``anchor``.

    ``direction`` (+1 or -1) points from the chord into the adjacent region
    where the envelope follows ``flux``; ``sign`` is +1 for an upper, -1 for
    a lower envelope.  Past the tangency point the tangent line passes on the
    outer side of the anchor, which is what the bisection brackets.
    """
    n = len(grid)
    h = grid[1] - grid[0]

    def past(s):
        # roundoff along a straight stretch must count as "not past"
        return sign * _tangency_gap(flux, s, anchor) < -GAP_TOL

    if direction > 0:
        first, last = int(np.searchsorted(grid, anchor + 0.5 * h)), n - 1
    else:
        first, last = 0, int(np.searchsorted(grid, anchor - 0.5 * h)) - 1
    if first > last:
        return guess
    j = int(np.clip(np.argmin(np.abs(grid - guess)), first, last))
    near, far = (max(j - 1, first), min(j + 1, last))[:: direction]
    while past(grid[near]) or not past(grid[far]):
        if abs(far - near) > 16:
            return guess
        near = min(max(near - direction, first), last)
        far = min(max(far + direction, first), last)
        if (near in (first, last)) and (far in (first, last)) and past(grid[near]) == past(grid[far]):
            return guess
    a, b = grid[near], grid[far]
    while abs(b - a) > tol:
        m = 0.5 * (a + b)
        if past(m):
            b = m
        else:
            a = m
    return 0.5 * (a + b)


def _merge_collinear(flux, knots, linear, tol=1e-9):
    """Join neighbouring pieces that lie on one straight line.

    Matters when ``flux`` is itself piecewise linear (the envelope of an
    envelope): roundoff can split a chord or leave a sliver that follows a
    straight stretch of ``flux``.
    """
    f = [float(flux.f(s)) for s in knots]
    slopes = [(f[k + 1] - f[k]) / (knots[k + 1] - knots[k]) for k in range(len(linear))]
    flags = list(linear)
    for k, lin in enumerate(flags):
        if not lin:
            inner = np.linspace(knots[k], knots[k + 1], 9)[1:-1]
            line = f[k] + slopes[k] * (inner - knots[k])
            flags[k] = bool(np.max(np.abs(np.asarray(flux.f(inner)) - line)) <= 1e-12)
    out_knots, out_linear = [knots[0]], []
    for k, lin in enumerate(flags):
        if out_linear and lin and out_linear[-1]:
            a = out_knots[-2]
            joined = (f[k + 1] - float(flux.f(a))) / (knots[k + 1] - a)
            if abs(joined - slopes[k]) <= tol * max(1.0, abs(joined)):
                out_knots[-1] = knots[k + 1]
                continue
        out_knots.append(knots[k + 1])
        out_linear.append(lin)
    return out_knots, out_linear


def build_hull(flux, S_left, S_right, n_samples=DEFAULT_HULL_SAMPLES, domain=(0.0, 1.0)):
    """Concave (``S_left > S_right``) or convex envelope of ``flux`` on ``domain``.

    The envelope is first taken over ``n_samples`` uniformly spaced points,
    then every chord end that touches a region where the envelope follows
    ``flux`` is moved onto the exact tangency point by bisection.
    """
    if S_left == S_right:
        raise DegenerateStateError(f"S_left == S_right == {S_left}: no wave direction")
    for name, val in (("S_left", S_left), ("S_right", S_right)):
        if not 0.0 <= val <= 1.0:
            raise SaturationDomainError(f"{name}={val} outside [0, 1]")
    if n_samples < 64:
        raise ValueError(f"n_samples must be >= 64, got {n_samples}")
    lo, hi = float(domain[0]), float(domain[1])
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"invalid hull domain {domain}")

    orientation = HullOrientation.CONCAVE_UPPER if S_left > S_right else HullOrientation.CONVEX_LOWER
    sign = 1.0 if orientation is HullOrientation.CONCAVE_UPPER else -1.0

    grid = np.linspace(lo, hi, n_samples)
    values = sign * np.asarray(flux.f(grid), dtype=float)
    h = (hi - lo) / (n_samples - 1)
    verts = _upper_chain(grid, values, tol=1e-10 * h * h)

    # Group hull vertices into chords (index gap > 1) and runs that follow flux.
    pieces = []
    for a, b in zip(verts[:-1], verts[1:]):
        lin = b - a > 1
        if pieces and not lin and not pieces[-1][2]:
            pieces[-1][1] = b
        else:
            pieces.append([a, b, lin])

    knots = [grid[p[0]] for p in pieces] + [grid[pieces[-1][1]]]
    linear = [p[2] for p in pieces]

    def follows_flux(k):
        return 0 <= k < len(linear) and not linear[k]

    for _ in range(20):
        moved = 0.0
        for k, lin in enumerate(linear):
            if not lin:
                continue
            left_end, right_end = knots[k], knots[k + 1]
            if follows_flux(k + 1):
                new = _refine_tangency(flux, left_end, right_end, grid, +1, sign)
                moved = max(moved, abs(new - right_end))
                knots[k + 1] = new
            if follows_flux(k - 1):
                new = _refine_tangency(flux, knots[k + 1], left_end, grid, -1, sign)
                moved = max(moved, abs(new - left_end))
                knots[k] = new
        if moved <= TANGENCY_TOL:
            break

    knots, linear = _merge_collinear(flux, [float(s) for s in knots], linear)
    breakpoints = tuple((s, float(flux.f(s))) for s in knots)
    return HullFlux(base=flux, orientation=orientation, breakpoints=breakpoints, linear=tuple(linear))


def max_abs_slope(flux, n_scan=1024, tol=1e-14):
    """Maximum of ``|f'|`` on [0, 1]: uniform scan, then golden-section refinement."""
    S = np.linspace(0.0, 1.0, n_scan)
    vals = np.abs(flux.df(S))
    j = int(np.nanargmax(vals))
    a, b = S[max(j - 1, 0)], S[min(j + 1, n_scan - 1)]

    def g(s):
        return float(abs(flux.df(s)))

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc > gd:
            b, d, gd = d, c, gc
            c = b - invphi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + invphi * (b - a)
            gd = g(d)
    return max(float(vals[j]), g(0.5 * (a + b)), g(S[max(j - 1, 0)]), g(S[min(j + 1, n_scan - 1)]))
