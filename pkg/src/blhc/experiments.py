"""Orchestration of solve / trace / metrics / compare runs and their CSV output."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .continuation import (
    CorrectorFailure,
    StepMode,
    TraceFailure,
    TraceStats,
    trace,
)
from .discretization import HomotopyKind, TimeStep, make_problem
from .metrics import sweep_metrics
from .scenario import ConfigError
from .solver import newton_solve


class RunFailure(RuntimeError):
    """A run stopped early; ``table`` holds what was produced before the failure."""

    def __init__(self, message, table, exit_code):
        super().__init__(message)
        self.table = table
        self.exit_code = exit_code


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    meta: list = field(default_factory=list)  # (key, value) pairs written as '# key = value'


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _flatten(d, prefix=""):
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{name}.")
        else:
            yield name, value


def format_csv(table: Table) -> str:
    lines = [f"# {k} = {_fmt(v)}" for k, v in table.meta]
    lines.append(",".join(table.columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in table.rows)
    return "\n".join(lines) + "\n"


def write_csv(table: Table, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(table))


def read_csv(path):
    """Parse a CSV written by :func:`write_csv` into ``(meta, columns, rows)``."""
    meta, columns, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            elif columns is None:
                columns = line.split(",")
            else:
                rows.append(line.split(","))
    return meta, columns, rows


def _base_meta(scenario, command):
    meta = [("tool", f"blhc {__version__}"), ("command", command)]
    meta.extend((f"scenario.{k}", v) for k, v in _flatten(scenario.to_dict()))
    meta.append(("resolved.tau", scenario.time_step))
    meta.append(("resolved.cfl", scenario.cfl_number))
    return meta


def build_problem(scenario, S_prev):
    h = scenario.homotopy
    step = TimeStep(scenario.time_step, S_prev, scenario.S_inflow)
    return make_problem(
        h.kind,
        scenario.flux,
        scenario.grid,
        step,
        omega=h.omega,
        S_initial=scenario.S_initial_right,
        flux_sign=h.flux_sign,
        diffusion_scaling=h.diffusion_scaling,
        hull_samples=h.hull_samples,
    )


@dataclass
class StepOutcome:
    ok: bool
    verdict: str
    X: np.ndarray
    pc_steps: int
    newton_iters: int
    message: str = ""


def advance(scenario, S_prev):
    """One implicit time step with the scenario's homotopy (plain Newton for target_only)."""
    problem = build_problem(scenario, S_prev)
    if problem.kind is HomotopyKind.TARGET_ONLY:
        rep = newton_solve(problem, 0.0, S_prev, scenario.solver)
        return StepOutcome(rep.converged, rep.verdict.value, rep.X_final, 1, rep.iterations, rep.message)
    stats = TraceStats()
    try:
        points = trace(problem, scenario.trace, stats=stats)
    except CorrectorFailure as err:
        return StepOutcome(False, "auxiliary_failure", S_prev, stats.accepted_steps, stats.newton_iters, str(err))
    except TraceFailure as err:
        return StepOutcome(False, "trace_failure", S_prev, stats.accepted_steps, stats.newton_iters, str(err))
    return StepOutcome(True, "converged", points[-1].X, stats.accepted_steps, stats.newton_iters)


def run_solve(scenario):
    """March all time steps; one CSV row per step with the saturation profile."""
    n = scenario.grid.n_cells
    table = Table(
        columns=["step", "time", "verdict", "pc_steps", "newton_iters", "cfl"]
        + [f"S_{k}" for k in range(1, n + 1)],
        meta=_base_meta(scenario, "solve"),
    )
    S = scenario.initial_saturation()
    tau = scenario.time_step
    table.rows.append([0, 0.0, "initial", 0, 0, scenario.cfl_number, *S])
    for step in range(1, scenario.n_steps + 1):
        out = advance(scenario, S)
        row_S = out.X if out.ok else [math.nan] * n
        table.rows.append([step, step * tau, out.verdict, out.pc_steps, out.newton_iters, scenario.cfl_number, *row_S])
        if not out.ok:
            raise RunFailure(f"step {step}: {out.verdict}: {out.message}", table, 3)
        S = out.X
    return table


def _march_to(scenario, step_index):
    S = scenario.initial_saturation()
    for step in range(1, step_index):
        out = advance(scenario, S)
        if not out.ok:
            raise RunFailure(f"step {step}: {out.verdict}: {out.message}", None, 3)
        S = out.X
    return S


def _trace_for(scenario, trace_cfg):
    if scenario.homotopy.kind is HomotopyKind.TARGET_ONLY:
        raise ConfigError("trace and metrics need a homotopy kind other than target_only")
    S_prev = _march_to(scenario, scenario.trace_step)
    problem = build_problem(scenario, S_prev)
    try:
        return problem, trace(problem, trace_cfg)
    except TraceFailure as err:
        return problem, err
    except CorrectorFailure as err:
        return problem, TraceFailure(str(err), [])


def run_trace(scenario):
    """Curve points of the configured time step."""
    n = scenario.grid.n_cells
    table = Table(
        columns=["step_index", "s", "lambda", "corrector_iters"] + [f"S_{k}" for k in range(1, n + 1)],
        meta=_base_meta(scenario, "trace"),
    )
    _, result = _trace_for(scenario, scenario.trace)
    points = result.points if isinstance(result, TraceFailure) else result
    for i, p in enumerate(points):
        table.rows.append([i, p.arclength, p.lam, p.corrector_iters, *p.X])
    if isinstance(result, TraceFailure):
        raise RunFailure(f"trace failed: {result}", table, 4)
    return table


METRICS_COLUMNS = ["s", "lambda", "kappa", "r", "r_tilde", "gamma_max", "err_scale"]


def metrics_trace_config(scenario):
    return dataclasses.replace(scenario.trace, mode=StepMode.ARCLENGTH, ds=scenario.metrics.ds,
                               ds_min=min(scenario.trace.ds_min, scenario.metrics.ds))


def compute_metrics(scenario):
    """Arclength-stepped trace plus metrics records; returns ``(records, s_tot, points)``."""
    problem, result = _trace_for(scenario, metrics_trace_config(scenario))
    if isinstance(result, TraceFailure):
        raise result
    records, s_tot = sweep_metrics(problem, result, scenario.metrics, scenario.solver)
    return records, s_tot, result


def run_metrics(scenario):
    table = Table(columns=list(METRICS_COLUMNS), meta=_base_meta(scenario, "metrics"))
    try:
        records, s_tot, points = compute_metrics(scenario)
    except TraceFailure as err:
        raise RunFailure(f"trace failed: {err}", table, 4) from err
    table.meta.append(("s_tot", s_tot))
    table.meta.append(("n_curve_points", len(points)))
    table.meta.append(("fd_step", scenario.metrics.resolved_fd_step))
    for r in records:
        table.rows.append([r.s, r.lam, r.kappa, r.r, r.r_tilde, r.gamma_max, r.err_scale])
    return table


SUMMARY_COLUMNS = ["kind", "success", "pc_steps", "newton_iters", "s_tot", "max_kappa", "min_r_tilde", "note"]


def compare_homotopies(scenario, kinds, with_metrics=True):
    """Summary row per homotopy kind: cost of the full run plus curve metrics of the traced step."""
    kinds = [HomotopyKind(k) for k in kinds]
    if len(kinds) < 2:
        raise ConfigError("compare needs at least two homotopy kinds")
    table = Table(columns=list(SUMMARY_COLUMNS), meta=_base_meta(scenario, "compare"))
    per_kind = {}
    for kind in kinds:
        sc = scenario.with_kind(kind)
        note = ""
        try:
            solve = run_solve(sc)
            success = True
        except RunFailure as err:
            solve, success, note = err.table, False, str(err)
        pc = sum(int(row[3]) for row in solve.rows[1:])
        iters = sum(int(row[4]) for row in solve.rows[1:])
        s_tot = max_kappa = min_r = None
        if with_metrics and kind is not HomotopyKind.TARGET_ONLY:
            try:
                records, s_tot, _ = compute_metrics(sc)
                kappas = [r.kappa for r in records if not math.isnan(r.kappa)]
                max_kappa = max(kappas) if kappas else None
                min_r = min((r.r_tilde for r in records), default=None)
            except (TraceFailure, RunFailure) as err:
                note = note or f"metrics: {err}"
        table.rows.append([kind.value, success, pc, iters, s_tot, max_kappa, min_r, note.replace(",", ";")])
        per_kind[kind.value] = solve
    return table, per_kind
