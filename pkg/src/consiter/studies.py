"""Refinement and acceleration experiments, with their CSV formats.

Convergence rows carry the error against both the target law and the
c-modified law (``dx, err_original, err_modified, c, evals``); acceleration
rows tabulate evaluations-to-residual-level for the standard versus the
flux-consistent GMRES initial guess (``residual, evals_standard,
evals_consistent, cfl``).  Both CSVs are the package's external interface —
the plotting tool consumes them without importing any of this code.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .butcher import tableau as lookup_tableau
from .fluxes import euler_primitives
from .grid import discrete_l2_error
from .krylov import GmresConfig
from .newton import GmresInner, NewtonConfig, newton_solve
from .problems import (
    Problem,
    advection_problem,
    run_time_integration,
    solver_consistency_factor,
    vortex_problem,
)
from .residuals import stage_residual, tile_stages

__all__ = [
    "ConvergenceRow",
    "convergence_study",
    "write_convergence_csv",
    "fitted_slope",
    "AccelerationCase",
    "acceleration_study",
    "write_acceleration_csv",
]


# ---------------------------------------------------------------------------
# grid refinement under a fixed iterative strategy

@dataclass
class ConvergenceRow:
    dx: float
    err_original: float
    err_modified: float
    c: float
    evals: int


def convergence_study(problem_factory: Callable[[int], Problem],
                      solver_factory: Callable[[Problem], object],
                      levels: Sequence[int],
                      method: str = "implicit-euler",
                      dt_over_dx: float = 0.25,
                      t_final: float = 0.5,
                      component: Optional[int] = None,
                      c_override: Optional[float] = None) -> list[ConvergenceRow]:
    """Run one solver strategy over a ladder of grids.

    ``problem_factory(level)`` builds the problem at refinement parameter
    ``level`` (cells in 1D, nx in 2D); the time step is ``dt_over_dx * dx``.
    The modified-law error is measured against ``reference_family(t)(c)``
    with the solver's own consistency factor (or ``c_override``).
    """
    rows = []
    for level in levels:
        problem = problem_factory(level)
        solver = solver_factory(problem)
        c = c_override if c_override is not None else solver_consistency_factor(solver)
        if c is None:
            raise ValueError("solver has no closed-form c; pass c_override")
        dt = dt_over_dx * problem.grid.dx
        run = run_time_integration(problem, solver, method=method, dt=dt,
                                   t_final=t_final, keep_step_info=False)
        family = problem.reference_family(t_final)
        err_orig = discrete_l2_error(run.final, family(1.0), component=component)
        err_mod = discrete_l2_error(run.final, family(c), component=component)
        rows.append(ConvergenceRow(dx=problem.grid.dx, err_original=err_orig,
                                   err_modified=err_mod, c=c,
                                   evals=run.total_evals))
    return rows


def fitted_slope(rows: Sequence[ConvergenceRow], which: str = "err_modified") -> float:
    """Least-squares slope of log(err) vs log(dx) over all rows."""
    xs = np.log([r.dx for r in rows])
    ys = np.log([getattr(r, which) for r in rows])
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def write_convergence_csv(rows: Sequence[ConvergenceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dx", "err_original", "err_modified", "c", "evals"])
        for r in rows:
            writer.writerow([f"{r.dx:.17g}", f"{r.err_original:.17g}",
                             f"{r.err_modified:.17g}", f"{r.c:.17g}", r.evals])


# ---------------------------------------------------------------------------
# Newton-GMRES acceleration via the flux-consistent initial guess

@dataclass
class AccelerationCase:
    """Evaluations-to-residual-level for both initial-guess policies at one CFL."""

    cfl: float
    nx: int
    residual_levels: list = dc_field(default_factory=list)
    evals_standard: list = dc_field(default_factory=list)
    evals_consistent: list = dc_field(default_factory=list)
    gnorms_standard: list = dc_field(default_factory=list)
    gnorms_consistent: list = dc_field(default_factory=list)
    evals_at_entry_standard: int = -1
    evals_at_entry_consistent: int = -1


def _newton_gmres_profile(problem: Problem, dt: float, guess: str,
                          newton_cfg: NewtonConfig, gmres_cfg: GmresConfig):
    """Single implicit-Euler step from the initial state; returns the Newton
    result plus the counter snapshot at first GMRES entry."""
    u_n = problem.initial.values
    residual = stage_residual(problem.grid, problem.fluxes, u_n, dt,
                              lookup_tableau("implicit-euler"))
    inner = GmresInner(config=gmres_cfg, guess=guess)
    result = newton_solve(residual, tile_stages(u_n, 1), newton_cfg, inner)
    entry = result.inner[0].evals_at_entry if result.inner else -1
    return result, entry


def _evals_to_reach(gnorms, evals, level):
    for g, e in zip(gnorms, evals):
        if g <= level:
            return e
    return None


def acceleration_study(nxs: Sequence[int] = (20, 40, 80), dt: float = 0.1,
                       flux: str = "euler-chandrashekar",
                       tol: float = 1e-11,
                       max_newton: int = 60,
                       gmres_max: int = 400) -> list[AccelerationCase]:
    """Compare GMRES initial-guess policies inside Eisenstat-Walker Newton.

    One implicit Euler step of the vortex flow at fixed dt on each grid (the
    grid sets the CFL number).  Residual levels are the decades between the
    initial and final residual norms reached by *both* policies.
    """
    cases = []
    for nx in nxs:
        problem = vortex_problem(nx=nx, ny=nx // 2, flux=flux)
        rho, vx, vy, p = euler_primitives(problem.initial.values,
                                          problem.params["gamma"])
        speed = np.abs(vx) + np.sqrt(problem.params["gamma"] * p / rho)
        cfl = float(dt * speed.max() / problem.grid.dx)

        newton_cfg = NewtonConfig(max_iter=max_newton, tol=tol,
                                  forcing="eisenstat-walker")
        gmres_cfg = GmresConfig(restart=gmres_max, max_iter=gmres_max, tol=1e-12)

        runs = {}
        entries = {}
        for guess in ("zero", "consistent"):
            result, entry = _newton_gmres_profile(problem, dt, guess,
                                                  newton_cfg, gmres_cfg)
            runs[guess] = result
            entries[guess] = entry

        g_std, e_std = runs["zero"].gnorms, runs["zero"].evals_at_gnorm
        g_con, e_con = runs["consistent"].gnorms, runs["consistent"].evals_at_gnorm
        top = min(max(g_std), max(g_con))
        bottom = max(min(g_std), min(g_con))
        levels = [10.0**k for k in range(math.floor(math.log10(top)),
                                         math.ceil(math.log10(bottom)) - 1, -1)]
        levels = [lv for lv in levels if bottom <= lv <= top] or [bottom]

        case = AccelerationCase(cfl=cfl, nx=nx,
                                gnorms_standard=g_std, gnorms_consistent=g_con,
                                evals_at_entry_standard=entries["zero"],
                                evals_at_entry_consistent=entries["consistent"])
        for lv in levels:
            es = _evals_to_reach(g_std, e_std, lv)
            ec = _evals_to_reach(g_con, e_con, lv)
            if es is None or ec is None:
                continue
            case.residual_levels.append(lv)
            case.evals_standard.append(es)
            case.evals_consistent.append(ec)
        cases.append(case)
    return cases


def write_acceleration_csv(cases: Sequence[AccelerationCase], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["residual", "evals_standard", "evals_consistent", "cfl"])
        for case in cases:
            for lv, es, ec in zip(case.residual_levels, case.evals_standard,
                                  case.evals_consistent):
                writer.writerow([f"{lv:.17g}", es, ec, f"{case.cfl:.17g}"])


# convenience factories used by the CLI and the test-suite -------------------

def advection_convergence(levels=(50, 100, 200, 400), solver_factory=None,
                          flux="advection-upwind", a=1.0, t_final=0.5,
                          dt_over_dx=0.25, method="implicit-euler",
                          c_override=None):
    factory = lambda n: advection_problem(n, a=a, flux=flux)
    return convergence_study(factory, solver_factory, levels, method=method,
                             dt_over_dx=dt_over_dx, t_final=t_final,
                             c_override=c_override)


def vortex_convergence(nxs=(40, 80, 160), solver_factory=None,
                       flux="euler-chandrashekar", t_final=0.1,
                       dt_over_dx=0.25, method="lobatto-iiic-3",
                       component=0, c_override=None):
    factory = lambda nx: vortex_problem(nx=nx, ny=nx // 2, flux=flux)
    return convergence_study(factory, solver_factory, nxs, method=method,
                             dt_over_dx=dt_over_dx, t_final=t_final,
                             component=component, c_override=c_override)
