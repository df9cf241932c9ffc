"""Benchmark problems and the time-stepping driver.

Problems bundle a grid, directional fluxes, an initial field, and reference
solutions *parameterized by the propagation-speed factor c* — the factor the
iterative solvers actually imprint on the solution.  ``reference_family(t)(1.0)``
is the exact solution of the target law; ``reference_family(t)(c)`` solves
the flux-scaled law the truncated iteration converges to.

Every implicit step — plain backward Euler or a full IRK stage system — is
solved through the same enlarged-system machinery: the unknown is the stage
stack, the solver is whatever strategy config the caller passed, and the step
is read off with the tableau's v-vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .butcher import ButcherTableau, find_v, tableau as lookup_tableau
from .errors import NoVVector, UnknownMethodName
from .fluxes import make_flux
from .grid import PeriodicGrid1D, PeriodicGrid2D, StateField
from .krylov import GmresConfig, gmres
from .newton import NewtonConfig, newton_solve
from .pseudo_time import (
    PseudoTimeSchedule,
    consistency_factor,
    enforce_flux_consistency,
    extract_step,
    newton_pseudo_consistency_factor,
    pseudo_time_iterate,
)
from .residuals import FDJacobianAction, stage_residual, tile_stages

__all__ = [
    "Problem",
    "advection_problem",
    "vortex_state",
    "vortex_problem",
    "PseudoSolver",
    "NewtonSolver",
    "KrylovSolver",
    "StepInfo",
    "RunResult",
    "advance_step",
    "run_time_integration",
    "step_sizes",
    "solver_consistency_factor",
]


@dataclass
class Problem:
    name: str
    grid: object
    m: int
    fluxes: object                     # BivariateFlux (1D) or (flux_x, flux_y)
    initial: StateField
    params: dict = dc_field(default_factory=dict)
    # reference_family(t) -> (c -> cell-center callable); None if no exact solution
    reference_family: Optional[Callable] = None

    def exact(self, t: float):
        """Exact solution of the unmodified law at time t (c = 1)."""
        if self.reference_family is None:
            return None
        return self.reference_family(t)(1.0)


# ---------------------------------------------------------------------------
# 1D linear advection with a smooth translating profile

def advection_problem(n: int, a: float = 1.0, flux: str = "advection-upwind",
                      x_min: float = 0.0, x_max: float = 1.0,
                      profile: Optional[Callable] = None) -> Problem:
    """Periodic advection of a smooth profile (default ``sin(2 pi x)``).

    The modified law ``u_t + c a u_x = 0`` is solved exactly by the profile
    translated at speed ``c a``, so retardation shows up as a pure shift.
    """
    grid = PeriodicGrid1D(n=n, x_min=x_min, x_max=x_max)
    length = x_max - x_min
    if profile is None:
        profile = lambda x: np.sin(2.0 * np.pi * (x - x_min) / length)

    def family(t):
        def at_speed(c):
            def ref(x):
                xs = x_min + np.mod(x - c * a * t - x_min, length)
                return profile(xs)[..., None]
            return ref
        return at_speed

    u0 = StateField(grid, profile(grid.cell_centers())[:, None])
    return Problem(
        name="advection-1d",
        grid=grid,
        m=1,
        fluxes=make_flux(flux, {"a": a}),
        initial=u0,
        params={"a": a, "flux": flux},
        reference_family=family,
    )


# ---------------------------------------------------------------------------
# 2D Euler: the isentropic vortex in a uniform stream

def vortex_state(x, y, eps: float = 5.0, mach: float = 0.5,
                 gamma: float = 1.4) -> np.ndarray:
    """Conservative vortex state at points ``(x, y)`` (broadcasting).

    A vortex of strength ``eps`` superposed on the uniform stream (1, 0):

        r    = 1 - x^2 - y^2
        rho  = (1 - eps^2 (gamma-1) M^2 / (8 pi^2) * e^r)^(1/(gamma-1))
        u    = 1 - eps y/(2 pi) e^(r/2),   v = eps x/(2 pi) e^(r/2)
        p    = rho^gamma / (gamma M^2)

    The exact Euler solution translates this profile with unit speed in x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = 1.0 - x**2 - y**2
    expr = np.exp(r)
    rho = (1.0 - eps**2 * (gamma - 1.0) * mach**2 / (8.0 * np.pi**2) * expr) \
        ** (1.0 / (gamma - 1.0))
    u = 1.0 - eps * y / (2.0 * np.pi) * np.exp(0.5 * r)
    v = eps * x / (2.0 * np.pi) * np.exp(0.5 * r)
    p = rho**gamma / (gamma * mach**2)
    state = np.empty(np.broadcast(x, y).shape + (4,))
    state[..., 0] = rho
    state[..., 1] = rho * u
    state[..., 2] = rho * v
    state[..., 3] = p / (gamma - 1.0) + 0.5 * rho * (u**2 + v**2)
    return state


def vortex_problem(nx: int, ny: int, flux: str = "euler-chandrashekar",
                   eps: float = 5.0, mach: float = 0.5, gamma: float = 1.4,
                   x_min: float = -5.0, x_max: float = 15.0,
                   y_min: float = -5.0, y_max: float = 5.0) -> Problem:
    grid = PeriodicGrid2D(nx=nx, ny=ny, x_min=x_min, x_max=x_max,
                          y_min=y_min, y_max=y_max)
    length = x_max - x_min
    params = {"eps": eps, "mach": mach, "gamma": gamma, "flux": flux}

    def family(t):
        def at_speed(c):
            def ref(X, Y):
                Xs = x_min + np.mod(X - c * t - x_min, length)
                return vortex_state(Xs, Y, eps=eps, mach=mach, gamma=gamma)
            return ref
        return at_speed

    X, Y = grid.cell_centers()
    u0 = StateField(grid, vortex_state(X, Y, eps=eps, mach=mach, gamma=gamma))
    flux_x = make_flux(flux, params, direction="x")
    flux_y = make_flux(flux, params, direction="y")
    return Problem(
        name="euler-vortex-2d",
        grid=grid,
        m=4,
        fluxes=(flux_x, flux_y),
        initial=u0,
        params=params,
        reference_family=family,
    )


# ---------------------------------------------------------------------------
# solver strategy configs

@dataclass
class PseudoSolver:
    """Fixed pseudo-time schedule per implicit solve (optionally c-enforced)."""

    schedule: PseudoTimeSchedule
    enforce: bool = False
    record: bool = False

    @property
    def effective_schedule(self) -> PseudoTimeSchedule:
        return enforce_flux_consistency(self.schedule) if self.enforce else self.schedule


@dataclass
class NewtonSolver:
    config: NewtonConfig
    inner: object                      # DirectInner / GmresInner / PseudoInner / MixedInner


@dataclass
class KrylovSolver:
    """Standalone (possibly restarted) GMRES on the affine step system,
    started from the previous time level."""

    config: GmresConfig


def solver_consistency_factor(solver) -> Optional[float]:
    """Flux-consistency factor c the solver imprints on each step.

    Exact for pseudo-time schedules and for Newton with a fixed pseudo-time
    inner schedule and fixed iteration count; 1.0 for solvers run to
    convergence (direct/GMRES/Newton-Krylov with tight tolerances).  None
    when no closed form applies (loose tolerances).
    """
    from .newton import PseudoInner  # local import to avoid cycle at module load

    if isinstance(solver, PseudoSolver):
        return consistency_factor(solver.effective_schedule)
    if isinstance(solver, NewtonSolver) and isinstance(solver.inner, PseudoInner) \
            and solver.config.tol == 0.0:
        return newton_pseudo_consistency_factor(solver.inner.schedule,
                                                solver.config.max_iter)
    if isinstance(solver, (NewtonSolver, KrylovSolver)):
        return 1.0
    return None


# ---------------------------------------------------------------------------
# stepping

@dataclass
class StepInfo:
    evals: int
    iterations: int
    converged: bool
    residual: object = None
    trace: object = None
    newton: object = None
    gmres: object = None


@dataclass
class RunResult:
    final: StateField
    steps: list
    t_final: float

    @property
    def total_evals(self) -> int:
        return sum(s.evals for s in self.steps)


def _integrator(method) -> ButcherTableau:
    tab = method if isinstance(method, ButcherTableau) else lookup_tableau(method)
    if tab.is_explicit:
        raise UnknownMethodName(f"{tab.name} is explicit; implicit solves need an implicit tableau")
    if find_v(tab) is None:
        raise NoVVector(f"{tab.name} admits no step-extraction vector")
    return tab


def advance_step(problem: Problem, u_n: np.ndarray, dt: float, tab: ButcherTableau,
                 solver) -> tuple[np.ndarray, StepInfo]:
    """One implicit time step of size dt from cell values ``u_n``."""
    residual = stage_residual(problem.grid, problem.fluxes, u_n, dt, tab)
    v0 = tile_stages(u_n, tab.s)

    if isinstance(solver, PseudoSolver):
        schedule = solver.effective_schedule
        out, trace = pseudo_time_iterate(residual, v0, schedule,
                                         record_fluxes=solver.record)
        info = StepInfo(evals=residual.evals, iterations=len(schedule),
                        converged=True, residual=residual, trace=trace)
    elif isinstance(solver, NewtonSolver):
        result = newton_solve(residual, v0, solver.config, solver.inner)
        out = result.v
        info = StepInfo(evals=residual.evals, iterations=result.iterations,
                        converged=result.converged, residual=residual, newton=result)
    elif isinstance(solver, KrylovSolver):
        g0 = residual(v0)
        matvec = FDJacobianAction(residual, v0, g_u=g0)
        run = gmres(matvec, b=None, x0=v0, config=solver.config, r0=-g0)
        out = run.x
        info = StepInfo(evals=residual.evals, iterations=run.iterations,
                        converged=run.converged, residual=residual, gmres=run)
    else:
        raise TypeError(f"unknown solver strategy {type(solver).__name__}")

    u_np1 = extract_step(out, tab, problem.m)
    return u_np1, info


def step_sizes(t_final: float, dt: float) -> list[float]:
    """Uniform steps of size dt, the last one shortened to land on t_final."""
    if not (t_final > 0.0 and dt > 0.0):
        raise ValueError("t_final and dt must be positive")
    n = max(1, math.ceil(t_final / dt - 1e-12))
    sizes = [dt] * (n - 1)
    sizes.append(t_final - dt * (n - 1))
    return sizes


def run_time_integration(problem: Problem, solver, method="implicit-euler",
                         dt: float = 0.1, t_final: float = 0.1,
                         keep_step_info: bool = True) -> RunResult:
    tab = _integrator(method)
    u = problem.initial.values.copy()
    steps = []
    t = 0.0
    for h in step_sizes(t_final, dt):
        u, info = advance_step(problem, u, h, tab, solver)
        t += h
        if keep_step_info:
            steps.append(info)
        else:  # keep only the accounting, drop array payloads
            steps.append(StepInfo(evals=info.evals, iterations=info.iterations,
                                  converged=info.converged))
    return RunResult(final=StateField(problem.grid, u), steps=steps, t_final=t)
