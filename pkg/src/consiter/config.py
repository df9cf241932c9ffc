"""TOML run configurations: parsing, strict validation, and solver assembly.

Unknown keys are errors on purpose — a typo like ``scheduel`` silently
falling back to a default would invalidate an experiment, so every section
validates against an explicit key set and :class:`ConfigError` carries the
offending key name (the CLI maps it to exit code 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .krylov import GmresConfig
from .newton import DirectInner, GmresInner, MixedInner, NewtonConfig, PseudoInner
from .problems import (
    KrylovSolver,
    NewtonSolver,
    Problem,
    PseudoSolver,
    advection_problem,
    vortex_problem,
)
from .pseudo_time import PseudoTimeSchedule

__all__ = ["RunConfig", "load_config", "build_problem", "build_solver"]

_SECTIONS = {"problem", "space", "time", "solver", "output", "study"}
_KEYS = {
    "problem": {"equation", "a", "eps", "mach", "gamma", "lam"},
    "space": {"n", "nx", "ny", "flux", "x_min", "x_max", "y_min", "y_max"},
    "time": {"integrator", "dt", "dt_over_dx", "t_final"},
    "solver": {
        "type", "schedule", "enforce_consistency", "record_trace",
        "max_iter", "tol", "rtol", "forcing", "eta",
        "inner", "guess", "gmres_restart", "gmres_max_iter", "gmres_tol",
        "mixed_parts",
    },
    "output": {"dir"},
    "study": {"levels", "nxs", "component"},
}


@dataclass
class RunConfig:
    problem: dict
    space: dict
    time: dict
    solver: dict
    output: dict = dc_field(default_factory=dict)
    study: dict = dc_field(default_factory=dict)
    raw: dict = dc_field(default_factory=dict)


def _validate_section(name: str, data: dict) -> dict:
    allowed = _KEYS[name]
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in section [{name}]")
    return data


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    for section in raw:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    for required in ("problem", "space", "time", "solver"):
        if required not in raw:
            raise ConfigError(f"missing required section [{required}]")
    return RunConfig(
        problem=_validate_section("problem", raw["problem"]),
        space=_validate_section("space", raw["space"]),
        time=_validate_section("time", raw["time"]),
        solver=_validate_section("solver", raw["solver"]),
        output=_validate_section("output", raw.get("output", {})),
        study=_validate_section("study", raw.get("study", {})),
        raw=raw,
    )


def _need(section: dict, key: str, section_name: str):
    if key not in section:
        raise ConfigError(f"missing key '{key}' in section [{section_name}]")
    return section[key]


def build_problem(cfg: RunConfig, override_n: Optional[int] = None) -> Problem:
    equation = _need(cfg.problem, "equation", "problem")
    space = cfg.space
    flux = _need(space, "flux", "space")
    if equation == "advection":
        n = override_n if override_n is not None else _need(space, "n", "space")
        return advection_problem(
            n=int(n),
            a=float(cfg.problem.get("a", 1.0)),
            flux=flux,
            x_min=float(space.get("x_min", 0.0)),
            x_max=float(space.get("x_max", 1.0)),
        )
    if equation == "euler-vortex":
        nx = override_n if override_n is not None else _need(space, "nx", "space")
        ny = space.get("ny", int(nx) // 2)
        if override_n is not None:
            ny = int(nx) // 2
        return vortex_problem(
            nx=int(nx), ny=int(ny), flux=flux,
            eps=float(cfg.problem.get("eps", 5.0)),
            mach=float(cfg.problem.get("mach", 0.5)),
            gamma=float(cfg.problem.get("gamma", 1.4)),
            x_min=float(space.get("x_min", -5.0)),
            x_max=float(space.get("x_max", 15.0)),
            y_min=float(space.get("y_min", -5.0)),
            y_max=float(space.get("y_max", 5.0)),
        )
    raise ConfigError(f"unknown equation '{equation}' in section [problem]")


def _parse_schedule(entries) -> PseudoTimeSchedule:
    if not isinstance(entries, list):
        raise ConfigError("solver 'schedule' must be a list of [method, mu] pairs")
    spec = []
    for item in entries:
        if not (isinstance(item, list) and len(item) == 2):
            raise ConfigError(f"bad schedule entry {item!r}; expected [method, mu]")
        spec.append((item[0], float(item[1])))
    try:
        return PseudoTimeSchedule.from_spec(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _gmres_config(solver: dict) -> GmresConfig:
    return GmresConfig(
        restart=int(solver.get("gmres_restart", 30)),
        max_iter=int(solver.get("gmres_max_iter", 200)),
        tol=float(solver.get("gmres_tol", 1e-10)),
    )


def _newton_inner(solver: dict, ndim: int):
    inner = solver.get("inner", "gmres")
    if inner == "direct":
        return DirectInner(jacobian="analytic" if ndim == 1 else "fd-colored")
    if inner == "gmres":
        return GmresInner(config=_gmres_config(solver),
                          guess=solver.get("guess", "zero"))
    if inner == "pseudo":
        return PseudoInner(_parse_schedule(_need(solver, "schedule", "solver")))
    if inner == "mixed":
        parts = []
        for part in solver.get("mixed_parts", ["gmres", "pseudo"]):
            if part == "gmres":
                parts.append(GmresInner(config=_gmres_config(solver),
                                        guess=solver.get("guess", "zero")))
            elif part == "pseudo":
                parts.append(PseudoInner(
                    _parse_schedule(_need(solver, "schedule", "solver"))))
            elif part == "direct":
                parts.append(DirectInner(
                    jacobian="analytic" if ndim == 1 else "fd-colored"))
            else:
                raise ConfigError(f"unknown mixed part '{part}' in [solver]")
        return MixedInner(parts)
    raise ConfigError(f"unknown inner solver '{inner}' in [solver]")


def build_solver(cfg: RunConfig, problem: Problem):
    solver = cfg.solver
    kind = _need(solver, "type", "solver")
    if kind == "pseudo":
        return PseudoSolver(
            schedule=_parse_schedule(_need(solver, "schedule", "solver")),
            enforce=bool(solver.get("enforce_consistency", False)),
            record=bool(solver.get("record_trace", False)),
        )
    if kind == "newton":
        ncfg = NewtonConfig(
            max_iter=int(solver.get("max_iter", 50)),
            tol=float(solver.get("tol", 1e-12)),
            rtol=float(solver.get("rtol", 0.0)),
            forcing=solver.get("forcing", "fixed"),
            eta=float(solver.get("eta", 1e-4)),
        )
        if ncfg.forcing not in ("fixed", "eisenstat-walker"):
            raise ConfigError(f"unknown forcing '{ncfg.forcing}' in [solver]")
        return NewtonSolver(config=ncfg,
                            inner=_newton_inner(solver, problem.grid.ndim))
    if kind == "gmres":
        return KrylovSolver(config=_gmres_config(solver))
    raise ConfigError(f"unknown solver type '{kind}' in [solver]")


def time_parameters(cfg: RunConfig, problem: Problem) -> tuple[str, float, float]:
    time = cfg.time
    integrator = time.get("integrator", "implicit-euler")
    t_final = float(_need(time, "t_final", "time"))
    if "dt" in time and "dt_over_dx" in time:
        raise ConfigError("give either 'dt' or 'dt_over_dx' in [time], not both")
    if "dt" in time:
        dt = float(time["dt"])
    elif "dt_over_dx" in time:
        dt = float(time["dt_over_dx"]) * problem.grid.dx
    else:
        raise ConfigError("missing key 'dt' or 'dt_over_dx' in section [time]")
    if dt <= 0 or t_final <= 0:
        raise ConfigError("'dt' and 't_final' must be positive")
    return integrator, dt, t_final
