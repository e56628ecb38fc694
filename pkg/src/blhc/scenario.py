"""Scenario files: strict TOML schema, validation and lossless round trip.

A scenario looks like::

    name = "degenerate_injection"

    [flux]
    n_w = 2.0
    n_n = 2.0
    M = 1.0

    [grid]
    n_cells = 100
    length = 1.0

    [time]
    cfl = 5.0        # or: tau = 0.025 (exactly one of the two)
    n_steps = 1

    [bc]
    S_inflow = 1.0

    [ic]
    S_initial = 0.0  # or a list with one value per cell

``homotopy``, ``solver``, ``trace`` and ``metrics`` tables are optional and
fall back to the defaults of the corresponding config classes.  Unknown keys
are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .continuation import StepMode, TraceConfig
from .discretization import DEFAULT_OMEGA, DiffusionScaling, FluxSign, Grid, HomotopyKind
from .metrics import MetricsConfig
from .physics import CoreyFlux, max_abs_slope
from .solver import NewtonConfig


class ConfigError(ValueError):
    """Malformed or invalid scenario configuration."""


@dataclass(frozen=True)
class HomotopySettings:
    kind: HomotopyKind = HomotopyKind.HULL
    omega: float = DEFAULT_OMEGA
    flux_sign: FluxSign = FluxSign.UPWIND_STANDARD
    diffusion_scaling: DiffusionScaling = DiffusionScaling.AS_PRINTED
    hull_samples: int = 1024

    def __post_init__(self):
        object.__setattr__(self, "kind", HomotopyKind(self.kind))
        object.__setattr__(self, "flux_sign", FluxSign(self.flux_sign))
        object.__setattr__(self, "diffusion_scaling", DiffusionScaling(self.diffusion_scaling))
        if not self.omega > 0.0:
            raise ValueError("omega must be positive")
        if int(self.hull_samples) != self.hull_samples or self.hull_samples < 64:
            raise ValueError("hull_samples must be an integer >= 64")


@dataclass(frozen=True)
class Scenario:
    name: str
    flux: CoreyFlux
    grid: Grid
    n_steps: int
    S_inflow: float
    S_initial: float | tuple
    tau: float | None = None
    cfl: float | None = None
    homotopy: HomotopySettings = field(default_factory=HomotopySettings)
    solver: NewtonConfig = field(default_factory=NewtonConfig)
    trace: TraceConfig = field(default_factory=TraceConfig)
    trace_step: int = 1
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    description: str = ""

    def __post_init__(self):
        if (self.tau is None) == (self.cfl is None):
            raise ValueError("time: give exactly one of 'tau' and 'cfl'")
        if self.tau is not None and not self.tau > 0.0:
            raise ValueError("time.tau must be positive")
        if self.cfl is not None and not self.cfl > 0.0:
            raise ValueError("time.cfl must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("time.n_steps must be an integer >= 1")
        if not 0.0 <= self.S_inflow <= 1.0:
            raise ValueError(f"bc.S_inflow={self.S_inflow} outside [0, 1]")
        if isinstance(self.S_initial, (list, tuple)):
            if len(self.S_initial) != self.grid.n_cells:
                raise ValueError("ic.S_initial list length must equal grid.n_cells")
            values = self.S_initial
        else:
            values = [self.S_initial]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("ic.S_initial values must lie in [0, 1]")
        if int(self.trace_step) != self.trace_step or not 1 <= self.trace_step <= self.n_steps:
            raise ValueError("trace.time_step must lie in [1, time.n_steps]")

    @property
    def max_speed(self):
        return max_abs_slope(self.flux)

    @property
    def time_step(self):
        """Resolved implicit step size."""
        return self.tau if self.tau is not None else self.cfl * self.grid.dx / self.max_speed

    @property
    def cfl_number(self):
        return self.time_step * self.max_speed / self.grid.dx

    def initial_saturation(self):
        if isinstance(self.S_initial, (list, tuple)):
            return np.array(self.S_initial, dtype=float)
        return np.full(self.grid.n_cells, float(self.S_initial))

    @property
    def S_initial_right(self):
        """Initial state ahead of the front, used for the wave direction."""
        return float(self.initial_saturation()[-1])

    def with_kind(self, kind):
        return dataclasses.replace(
            self, homotopy=dataclasses.replace(self.homotopy, kind=HomotopyKind(kind))
        )

    def to_dict(self):
        time = {"tau": self.tau} if self.tau is not None else {"cfl": self.cfl}
        time["n_steps"] = self.n_steps
        trace = {f.name: getattr(self.trace, f.name) for f in dataclasses.fields(TraceConfig) if f.name != "newton"}
        trace["mode"] = self.trace.mode.value
        trace["time_step"] = self.trace_step
        metrics = {"ds": self.metrics.ds, "n_gamma": self.metrics.n_gamma}
        if self.metrics.fd_step is not None:
            metrics["fd_step"] = self.metrics.fd_step
        S_initial = list(self.S_initial) if isinstance(self.S_initial, (list, tuple)) else self.S_initial
        out = {
            "name": self.name,
            "flux": {"n_w": self.flux.n_w, "n_n": self.flux.n_n, "M": self.flux.M},
            "grid": {"n_cells": self.grid.n_cells, "length": self.grid.length},
            "time": time,
            "bc": {"S_inflow": self.S_inflow},
            "ic": {"S_initial": S_initial},
            "homotopy": {
                "kind": self.homotopy.kind.value,
                "omega": self.homotopy.omega,
                "flux_sign": self.homotopy.flux_sign.value,
                "diffusion_scaling": self.homotopy.diffusion_scaling.value,
                "hull_samples": self.homotopy.hull_samples,
            },
            "solver": dataclasses.asdict(self.solver),
            "trace": trace,
            "metrics": metrics,
        }
        if self.description:
            out["description"] = self.description
        return out

    def dumps(self):
        return tomli_w.dumps(self.to_dict())


_NUMBER = (int, float)

_SCHEMA = {
    "flux": {"n_w": _NUMBER, "n_n": _NUMBER, "M": _NUMBER},
    "grid": {"n_cells": int, "length": _NUMBER},
    "time": {"tau": _NUMBER, "cfl": _NUMBER, "n_steps": int},
    "bc": {"S_inflow": _NUMBER},
    "ic": {"S_initial": (int, float, list)},
    "homotopy": {"kind": str, "omega": _NUMBER, "flux_sign": str, "diffusion_scaling": str, "hull_samples": int},
    "solver": {"tol_abs": _NUMBER, "tol_step": _NUMBER, "max_iter": int, "diverge_factor": _NUMBER},
    "trace": {
        "dlambda_init": _NUMBER,
        "dlambda_min": _NUMBER,
        "dlambda_max": _NUMBER,
        "grow": _NUMBER,
        "shrink": _NUMBER,
        "grow_max_iters": int,
        "mode": str,
        "ds": _NUMBER,
        "ds_min": _NUMBER,
        "time_step": int,
    },
    "metrics": {"ds": _NUMBER, "n_gamma": int, "fd_step": _NUMBER},
}
_REQUIRED = {
    "flux": ("n_w", "n_n", "M"),
    "grid": ("n_cells",),
    "time": ("n_steps",),
    "bc": ("S_inflow",),
    "ic": ("S_initial",),
}
_TOP_LEVEL = {"name": str, "description": str}


def _check_table(raw):
    for key, value in raw.items():
        if key in _TOP_LEVEL:
            if not isinstance(value, _TOP_LEVEL[key]):
                raise ConfigError(f"'{key}' must be a string")
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"unknown table or key '{key}'")
        if not isinstance(value, dict):
            raise ConfigError(f"'{key}' must be a table")
        for sub, val in value.items():
            where = f"{key}.{sub}"
            if sub not in _SCHEMA[key]:
                raise ConfigError(f"unknown key '{where}'")
            expected = _SCHEMA[key][sub]
            if isinstance(val, bool) or not isinstance(val, expected):
                raise ConfigError(f"'{where}' has invalid type {type(val).__name__}")
            if isinstance(val, list) and any(isinstance(v, bool) or not isinstance(v, _NUMBER) for v in val):
                raise ConfigError(f"'{where}' must hold numbers only")
    if "name" not in raw:
        raise ConfigError("missing required key 'name'")
    for table, keys in _REQUIRED.items():
        for key in keys:
            if key not in raw.get(table, {}):
                raise ConfigError(f"missing required key '{table}.{key}'")


def scenario_from_dict(raw):
    """Validate a parsed scenario table and build a :class:`Scenario`."""
    _check_table(raw)
    get = lambda table: dict(raw.get(table, {}))  # noqa: E731
    try:
        flux = CoreyFlux(**{k: float(v) for k, v in get("flux").items()})
        grid_raw = get("grid")
        grid = Grid(int(grid_raw["n_cells"]), float(grid_raw.get("length", 1.0)))
        time = get("time")
        solver = NewtonConfig(**get("solver"))
        trace_raw = get("trace")
        trace_step = trace_raw.pop("time_step", 1)
        if "mode" in trace_raw:
            trace_raw["mode"] = StepMode(trace_raw["mode"])
        trace = TraceConfig(newton=solver, **trace_raw)
        ic = get("ic")["S_initial"]
        S_initial = tuple(float(v) for v in ic) if isinstance(ic, list) else float(ic)
        return Scenario(
            name=raw["name"],
            description=raw.get("description", ""),
            flux=flux,
            grid=grid,
            tau=float(time["tau"]) if "tau" in time else None,
            cfl=float(time["cfl"]) if "cfl" in time else None,
            n_steps=time["n_steps"],
            S_inflow=float(get("bc")["S_inflow"]),
            S_initial=S_initial,
            homotopy=HomotopySettings(**get("homotopy")),
            solver=solver,
            trace=trace,
            trace_step=trace_step,
            metrics=MetricsConfig(**get("metrics")),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid scenario: {err}") from err


def parse_override(raw, item):
    """Apply ``table.key=value`` to a raw scenario dict; the value is read as TOML."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, value = item.split("=", 1)
    key = key.strip()
    try:
        parsed = tomli.loads(f"v = {value.strip()}")["v"]
    except tomli.TOMLDecodeError:
        parsed = value.strip()
    parts = key.split(".")
    if len(parts) == 1:
        raw[key] = parsed
    elif len(parts) == 2:
        raw.setdefault(parts[0], {})[parts[1]] = parsed
    else:
        raise ConfigError(f"override key '{key}' nests too deep")
    return raw


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    files = resources.files("blhc").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def _read_source(path):
    p = Path(path)
    if p.exists():
        return p.read_text(encoding="utf-8"), str(p)
    name = str(path)
    if name in bundled_scenarios():
        res = resources.files("blhc").joinpath("scenarios", f"{name}.toml")
        return res.read_text(encoding="utf-8"), f"<bundled {name}>"
    raise ConfigError(f"scenario file not found: {path}")


def load_raw(path):
    text, origin = _read_source(path)
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"{origin}: {err}") from err


def load_scenario(path, overrides=()):
    """Load a scenario file (or bundled scenario name), applying ``key=value`` overrides."""
    raw = load_raw(path)
    for item in overrides:
        parse_override(raw, item)
    return scenario_from_dict(raw)


def loads_scenario(text):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(str(err)) from err
    return scenario_from_dict(raw)
