"""Implicit Euler / upwind finite-volume residuals and the homotopy operator.

One implicit time step of the Buckley-Leverett equation on a uniform grid
gives the nonlinear system ``F(X) = 0`` in the cell saturations ``X``:

    F_k = (X_k - S_prev_k) / tau + s * (f(X_k) - f(X_{k-1})) / dx,

with the inflow value ``S_inflow`` as left ghost ``X_0``.  The sign ``s`` is
+1 for standard upwinding (``FluxSign.UPWIND_STANDARD``) and -1 for the
flux difference written as ``f(X_{k-1}) - f(X_k)`` (``FluxSign.AS_PRINTED``).

The homotopy operators embed ``F`` in a one-parameter family ``H(X; lam)``:

* ``vanishing_diffusion``: ``H = F + lam * D``;
* ``linear_relperm`` and ``hull``: ``H = lam * G + (1 - lam) * F`` where ``G``
  is ``F`` with the flux swapped for the auxiliary one;
* ``target_only``: ``H = F``.

Jacobians are returned as :class:`Tridiagonal` bands.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .physics import CoreyFlux, DegenerateStateError, build_hull, linearized_flux, max_abs_slope

DEFAULT_OMEGA = 2e-3
LAMBDA_TOL = 1e-12


class HomotopyKind(str, enum.Enum):
    TARGET_ONLY = "target_only"
    VANISHING_DIFFUSION = "vanishing_diffusion"
    LINEAR_RELPERM = "linear_relperm"
    HULL = "hull"


class FluxSign(str, enum.Enum):
    AS_PRINTED = "as_printed"
    UPWIND_STANDARD = "upwind_standard"


class DiffusionScaling(str, enum.Enum):
    AS_PRINTED = "as_printed"  # beta * tau / dx
    LAPLACIAN = "laplacian"  # beta * tau / dx**2


def _convective_sign(flux_sign):
    return 1.0 if FluxSign(flux_sign) is FluxSign.UPWIND_STANDARD else -1.0


@dataclass(frozen=True)
class Grid:
    n_cells: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError(f"n_cells must be a positive integer, got {self.n_cells}")
        if not self.length > 0.0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass(frozen=True)
class TimeStep:
    tau: float
    S_prev: np.ndarray
    S_inflow: float

    def __post_init__(self):
        S_prev = np.array(self.S_prev, dtype=float)
        S_prev.setflags(write=False)
        object.__setattr__(self, "S_prev", S_prev)
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if S_prev.ndim != 1 or np.any(S_prev < 0.0) or np.any(S_prev > 1.0):
            raise ValueError("S_prev must be a vector with entries in [0, 1]")
        if not 0.0 <= self.S_inflow <= 1.0:
            raise ValueError(f"S_inflow must lie in [0, 1], got {self.S_inflow}")


@dataclass(frozen=True)
class Tridiagonal:
    """Tridiagonal matrix stored by bands; ``sub[i]`` sits at ``(i + 1, i)``."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __add__(self, other):
        return Tridiagonal(self.sub + other.sub, self.diag + other.diag, self.sup + other.sup)

    def __rmul__(self, c):
        return Tridiagonal(c * self.sub, c * self.diag, c * self.sup)

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[1:] += self.sub * v[:-1]
        out[:-1] += self.sup * v[1:]
        return out

    def to_dense(self):
        n = len(self.diag)
        A = np.diag(self.diag)
        if n > 1:
            A += np.diag(self.sub, -1) + np.diag(self.sup, 1)
        return A


def _check_length(grid, X):
    X = np.asarray(X, dtype=float)
    if X.shape != (grid.n_cells,):
        raise ValueError(f"expected a vector of length {grid.n_cells}, got shape {X.shape}")
    return X


def residual_target(grid, step, flux, X, flux_sign=FluxSign.UPWIND_STANDARD):
    """Implicit upwind residual of one time step with flux function ``flux``."""
    X = _check_length(grid, X)
    fX = flux.f(X, extended=True)
    f_up = np.empty_like(fX)
    f_up[0] = flux.f(step.S_inflow)
    f_up[1:] = fX[:-1]
    return (X - step.S_prev) / step.tau + _convective_sign(flux_sign) * (fX - f_up) / grid.dx


def jacobian_target(grid, step, flux, X, flux_sign=FluxSign.UPWIND_STANDARD) -> Tridiagonal:
    X = _check_length(grid, X)
    s = _convective_sign(flux_sign)
    dfX = flux.df(X, extended=True)
    diag = 1.0 / step.tau + s * dfX / grid.dx
    sub = -s * dfX[:-1] / grid.dx
    return Tridiagonal(sub, diag, np.zeros(grid.n_cells - 1))


def _diffusion_coefficient(grid, step, beta, scaling, flux_sign):
    scale = step.tau / grid.dx
    if DiffusionScaling(scaling) is DiffusionScaling.LAPLACIAN:
        scale /= grid.dx
    # Dissipative relative to the convective term for either sign convention.
    return -_convective_sign(flux_sign) * beta * scale


def residual_diffusion(
    grid,
    step,
    X,
    beta,
    scaling=DiffusionScaling.AS_PRINTED,
    flux_sign=FluxSign.UPWIND_STANDARD,
):
    """Artificial diffusion ``c * (X_{k-1} - 2 X_k + X_{k+1})``.

    Ghosts: ``X_0 = S_inflow``, ``X_{N+1} = X_N``.  With ``flux_sign`` as
    printed, ``c = beta * tau / dx``; the standard upwind sign flips ``c`` so
    the term stays dissipative.
    """
    X = _check_length(grid, X)
    c = _diffusion_coefficient(grid, step, beta, scaling, flux_sign)
    padded = np.concatenate(([step.S_inflow], X, [X[-1]]))
    return c * (padded[:-2] - 2.0 * padded[1:-1] + padded[2:])


def jacobian_diffusion(
    grid,
    step,
    X,
    beta,
    scaling=DiffusionScaling.AS_PRINTED,
    flux_sign=FluxSign.UPWIND_STANDARD,
) -> Tridiagonal:
    _check_length(grid, X)
    c = _diffusion_coefficient(grid, step, beta, scaling, flux_sign)
    n = grid.n_cells
    diag = np.full(n, -2.0 * c)
    diag[-1] += c
    return Tridiagonal(np.full(n - 1, c), diag, np.full(n - 1, c))


def calibrate_beta(flux, omega=DEFAULT_OMEGA):
    """Diffusion strength ``omega * max |f'(S)|`` over [0, 1]."""
    if not omega > 0.0:
        raise ValueError(f"omega must be positive, got {omega}")
    return omega * max_abs_slope(flux)


@dataclass(frozen=True)
class HomotopyProblem:
    kind: HomotopyKind
    flux_target: CoreyFlux
    grid: Grid
    step: TimeStep
    flux_aux: object = None
    beta: float = 0.0
    flux_sign: FluxSign = FluxSign.UPWIND_STANDARD
    diffusion_scaling: DiffusionScaling = DiffusionScaling.AS_PRINTED

    def __post_init__(self):
        object.__setattr__(self, "kind", HomotopyKind(self.kind))
        object.__setattr__(self, "flux_sign", FluxSign(self.flux_sign))
        object.__setattr__(self, "diffusion_scaling", DiffusionScaling(self.diffusion_scaling))
        if len(self.step.S_prev) != self.grid.n_cells:
            raise ValueError("S_prev length does not match the grid")
        if self.is_convex_combination and self.flux_aux is None:
            raise ValueError(f"{self.kind.value} homotopy needs an auxiliary flux")

    @property
    def is_convex_combination(self):
        return self.kind in (HomotopyKind.LINEAR_RELPERM, HomotopyKind.HULL)

    def _check_lambda(self, lam):
        if not -LAMBDA_TOL <= lam <= 1.0 + LAMBDA_TOL:
            raise ValueError(f"lambda={lam} outside [0, 1]")

    def target(self, X):
        return residual_target(self.grid, self.step, self.flux_target, X, self.flux_sign)

    def auxiliary(self, X):
        """``G(X)`` for convex-combination kinds, ``D(X)`` for the diffusion kind."""
        if self.kind is HomotopyKind.VANISHING_DIFFUSION:
            return residual_diffusion(
                self.grid, self.step, X, self.beta, self.diffusion_scaling, self.flux_sign
            )
        if self.is_convex_combination:
            return residual_target(self.grid, self.step, self.flux_aux, X, self.flux_sign)
        return np.zeros(self.grid.n_cells)

    def residual(self, X, lam):
        self._check_lambda(lam)
        F = self.target(X)
        if self.kind is HomotopyKind.TARGET_ONLY:
            return F
        if self.kind is HomotopyKind.VANISHING_DIFFUSION:
            return F + lam * self.auxiliary(X)
        return lam * self.auxiliary(X) + (1.0 - lam) * F

    def jac_X(self, X, lam) -> Tridiagonal:
        self._check_lambda(lam)
        JF = jacobian_target(self.grid, self.step, self.flux_target, X, self.flux_sign)
        if self.kind is HomotopyKind.TARGET_ONLY:
            return JF
        if self.kind is HomotopyKind.VANISHING_DIFFUSION:
            JD = jacobian_diffusion(
                self.grid, self.step, X, self.beta, self.diffusion_scaling, self.flux_sign
            )
            return JF + lam * JD
        JG = jacobian_target(self.grid, self.step, self.flux_aux, X, self.flux_sign)
        return lam * JG + (1.0 - lam) * JF

    def jac_lambda(self, X, lam):
        self._check_lambda(lam)
        if self.kind is HomotopyKind.TARGET_ONLY:
            return np.zeros(self.grid.n_cells)
        if self.kind is HomotopyKind.VANISHING_DIFFUSION:
            return self.auxiliary(X)
        return self.auxiliary(X) - self.target(X)


def homotopy_residual(problem, X, lam):
    return problem.residual(X, lam)


def homotopy_jac_X(problem, X, lam):
    return problem.jac_X(X, lam)


def homotopy_jac_lambda(problem, X, lam):
    return problem.jac_lambda(X, lam)


def make_problem(
    kind,
    flux,
    grid,
    step,
    *,
    omega=DEFAULT_OMEGA,
    S_initial=None,
    flux_sign=FluxSign.UPWIND_STANDARD,
    diffusion_scaling=DiffusionScaling.AS_PRINTED,
    hull_samples=1024,
):
    """Assemble a :class:`HomotopyProblem` with its auxiliary flux or diffusion strength.

    The hull orientation follows the wave direction ``sign(S_inflow - S_initial)``;
    ``S_initial`` defaults to the outflow cell of ``step.S_prev``.  Without a
    wave (equal states) the concave envelope is used.
    """
    kind = HomotopyKind(kind)
    flux_aux, beta = None, 0.0
    if kind is HomotopyKind.LINEAR_RELPERM:
        flux_aux = linearized_flux(flux)
    elif kind is HomotopyKind.HULL:
        S_right = float(step.S_prev[-1]) if S_initial is None else float(S_initial)
        try:
            flux_aux = build_hull(flux, step.S_inflow, S_right, hull_samples)
        except DegenerateStateError:
            flux_aux = build_hull(flux, 1.0, 0.0, hull_samples)
    elif kind is HomotopyKind.VANISHING_DIFFUSION:
        beta = calibrate_beta(flux, omega)
    return HomotopyProblem(
        kind=kind,
        flux_target=flux,
        grid=grid,
        step=step,
        flux_aux=flux_aux,
        beta=beta,
        flux_sign=flux_sign,
        diffusion_scaling=diffusion_scaling,
    )
