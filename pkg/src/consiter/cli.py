"""Command-line front end.

Thread pinning happens here, before numpy is imported anywhere: implicit
solves on the desk-scale grids we target are memory-bound, and letting BLAS
fan out over every core makes the timed studies noisy.  Override with
CONS_ITER_THREADS.

Exit codes: 0 success (including a cleanly reported non-converged solve),
1 solver failure mid-run, 2 configuration problems.
"""

from __future__ import annotations

import os

_threads = os.environ.get("CONS_ITER_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audit import (
    ConservationReport,
    check_local_conservation,
    measure_effective_c,
    reconstruct_h_flux,
    telescoping_residual,
)
from .butcher import available_tableaux, tableau
from .config import build_problem, build_solver, load_config, time_parameters
from .errors import ConfigError, ConsIterError, UnknownMethodName
from .fluxes import flux_names
from .grid import mass_drift, read_csv, write_csv
from .krylov import verify_krylov_erk_equivalence
from .problems import PseudoSolver, run_time_integration, solver_consistency_factor
from .pseudo_time import PseudoTrace, PseudoTimeSchedule, ScheduleStep
from .butcher import ButcherTableau
from .studies import (
    acceleration_study,
    advection_convergence,
    fitted_slope,
    vortex_convergence,
    write_acceleration_csv,
    write_convergence_csv,
)

_CONFIG_ERRORS = (ConfigError, UnknownMethodName)


def _save_trace_npz(path: Path, trace: PseudoTrace, u_n: np.ndarray,
                    u_out: np.ndarray, dt: float) -> None:
    """Serialize one step's pseudo-time record for offline auditing."""
    data: dict[str, np.ndarray] = {
        "u_n": u_n,
        "u_out": u_out,
        "dt": np.asarray(dt),
        "n_iters": np.asarray(len(trace.schedule)),
    }
    for k, step in enumerate(trace.schedule):
        data[f"A_{k}"] = np.asarray(step.tableau.A)
        data[f"b_{k}"] = np.asarray(step.tableau.b)
        data[f"mu_{k}"] = np.asarray(step.mu)
        for j, per_dir in enumerate(trace.stage_fluxes[k]):
            for d, arr in enumerate(per_dir):
                data[f"flux_{k}_{j}_{d}"] = arr
    np.savez(path, **data)


def _load_trace_npz(path: Path):
    with np.load(path) as npz:
        n_iters = int(npz["n_iters"])
        steps, fluxes = [], []
        for k in range(n_iters):
            tab = ButcherTableau(npz[f"A_{k}"], npz[f"b_{k}"])
            steps.append(ScheduleStep(tab, float(npz[f"mu_{k}"])))
            stage_records = []
            for j in range(tab.s):
                per_dir, d = [], 0
                while f"flux_{k}_{j}_{d}" in npz:
                    per_dir.append(npz[f"flux_{k}_{j}_{d}"])
                    d += 1
                stage_records.append(tuple(per_dir))
            fluxes.append(stage_records)
        schedule = PseudoTimeSchedule(tuple(steps))
        u_n = npz["u_n"]
        u_out = npz["u_out"]
        dt = float(npz["dt"])
    trace = PseudoTrace(schedule=schedule, iterates=[u_n],
                        stage_fluxes=fluxes, residual_norms=[])
    return trace, u_n, u_out, dt


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    solver = build_solver(cfg, problem)
    integrator, dt, t_final = time_parameters(cfg, problem)
    outdir = Path(args.out or cfg.output.get("dir", "out"))
    outdir.mkdir(parents=True, exist_ok=True)

    u0 = problem.initial
    write_csv(u0, outdir / "state_initial.csv")
    result = run_time_integration(problem, solver, method=integrator,
                                  dt=dt, t_final=t_final)
    write_csv(result.final, outdir / "state_final.csv")

    drift = mass_drift(u0, result.final)
    c = solver_consistency_factor(solver)
    all_converged = all(s.converged for s in result.steps)
    meta = {
        "version": __version__,
        "config": cfg.raw,
        "problem": problem.name,
        "equation": cfg.problem["equation"],
        "integrator": integrator,
        "dx": problem.grid.dx,
        "dt": dt,
        "t_final": result.t_final,
        "n_steps": len(result.steps),
        "total_evals": result.total_evals,
        "all_converged": all_converged,
        "consistency_factor": c,
        "mass_drift_max": float(np.max(drift)),
    }

    has_trace = isinstance(solver, PseudoSolver) and solver.record
    if has_trace and result.steps:
        last = result.steps[-1]
        res = last.residual
        u_out = last.trace.iterates[-1]
        _save_trace_npz(outdir / "trace.npz", last.trace, res.u_n, u_out, res.dt)
        meta["trace"] = "trace.npz"
        report = check_local_conservation(res, last.trace, u_out)
        meta["telescoping_defect"] = float(report["defect"])

    with open(outdir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=float)
        fh.write("\n")

    print(f"wrote {outdir}/: {len(result.steps)} steps, "
          f"{result.total_evals} evals, mass drift {np.max(drift):.3e}")
    if not all_converged:
        print("warning: at least one step reported non-convergence")
    return 0


def _cmd_audit(args) -> int:
    outdir = Path(args.artifacts)
    meta_path = outdir / "meta.json"
    if not meta_path.exists():
        raise ConfigError(f"no meta.json under {outdir}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    cfg = _config_from_meta(meta)
    problem = build_problem(cfg)

    u0 = read_csv(outdir / "state_initial.csv", problem.grid)
    u1 = read_csv(outdir / "state_final.csv", problem.grid)
    report = ConservationReport.from_fields(u0, u1)

    trace_file = meta.get("trace")
    if trace_file and (outdir / trace_file).exists():
        trace, u_n, u_out, dt = _load_trace_npz(outdir / trace_file)
        h = reconstruct_h_flux(trace)
        report.telescoping_defect = float(
            telescoping_residual(u_n, u_out, h, dt, problem.grid))
        report.telescoping_scale = max(1.0, 1.0 / dt)

    if problem.reference_family is not None:
        family = problem.reference_family(meta["t_final"])
        component = 0 if problem.m > 1 else None
        c_star, err_star = measure_effective_c(u1, family, component=component)
        report.effective_c = c_star
        report.effective_c_error = err_star

    predicted = meta.get("consistency_factor")
    if predicted is not None:
        report.notes.append(f"solver-predicted consistency factor {predicted:.8f}")

    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _config_from_meta(meta: dict):
    from .config import RunConfig, _validate_section

    raw = meta.get("config")
    if not isinstance(raw, dict):
        raise ConfigError("meta.json carries no embedded config")
    return RunConfig(
        problem=_validate_section("problem", raw["problem"]),
        space=_validate_section("space", raw["space"]),
        time=_validate_section("time", raw["time"]),
        solver=_validate_section("solver", raw["solver"]),
        output=raw.get("output", {}),
        study=raw.get("study", {}),
        raw=raw,
    )


def _cmd_convergence(args) -> int:
    cfg = load_config(args.config)
    equation = cfg.problem.get("equation")
    integrator = cfg.time.get("integrator", "implicit-euler")
    if "t_final" not in cfg.time:
        raise ConfigError("missing key 't_final' in section [time]")
    t_final = float(cfg.time["t_final"])
    if "dt_over_dx" not in cfg.time:
        raise ConfigError("refinement studies need 'dt_over_dx' in [time]")
    dt_over_dx = float(cfg.time["dt_over_dx"])

    def solver_factory(problem):
        return build_solver(cfg, problem)

    if equation == "advection":
        levels = tuple(int(n) for n in cfg.study.get("levels", (50, 100, 200, 400)))
        rows = advection_convergence(
            levels=levels, solver_factory=solver_factory, method=integrator,
            dt_over_dx=dt_over_dx, t_final=t_final,
            a=float(cfg.problem.get("a", 1.0)),
            flux=cfg.space.get("flux", "advection-upwind"),
        )
    elif equation == "euler-vortex":
        nxs = tuple(int(n) for n in cfg.study.get("nxs", (40, 80, 160)))
        rows = vortex_convergence(
            nxs=nxs, solver_factory=solver_factory, method=integrator,
            dt_over_dx=dt_over_dx, t_final=t_final,
            flux=cfg.space.get("flux", "euler-chandrashekar"),
            component=int(cfg.study.get("component", 0)),
        )
    else:
        raise ConfigError(f"unknown equation '{equation}' in section [problem]")

    write_convergence_csv(rows, args.out)
    slope_mod = fitted_slope(rows, "err_modified")
    slope_orig = fitted_slope(rows, "err_original")
    print(f"wrote {args.out}")
    print(f"slope vs original solution: {slope_orig:+.3f}")
    print(f"slope vs c-adjusted solution: {slope_mod:+.3f}")
    for row in rows:
        print(f"  dx={row.dx:.5g}  err_orig={row.err_original:.4e}  "
              f"err_mod={row.err_modified:.4e}  c={row.c:.6f}  evals={row.evals}")
    return 0


def _cmd_krylov_equiv(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows, worst = [], 0.0
    for trial in range(args.count):
        n = int(rng.integers(3, args.max_size + 1))
        k = int(rng.integers(1, min(args.max_depth, n) + 1))
        a = float(rng.choice([0.5, 1.0, 2.0]))
        M = np.eye(n) + 0.3 * rng.standard_normal((n, n))
        d = rng.standard_normal(n)
        w0 = rng.standard_normal(n)
        out = verify_krylov_erk_equivalence(M, d, w0, k, a=a)
        rows.append((trial, n, out["iterations"], a, out["rel_diff"]))
        worst = max(worst, out["rel_diff"])
    print("trial,n,iterations,a,rel_diff")
    for trial, n, k, a, diff in rows:
        print(f"{trial},{n},{k},{a},{diff:.3e}")
    print(f"worst relative difference over {args.count} trials: {worst:.3e}")
    return 0 if worst < args.tol else 1


def _cmd_accel(args) -> int:
    cases = acceleration_study(nxs=tuple(args.nx), dt=args.dt, tol=args.tol)
    write_acceleration_csv(cases, args.out)
    print(f"wrote {args.out}")
    for case in cases:
        print(f"  nx={case.nx}  CFL={case.cfl:.1f}  "
              f"evals standard={case.evals_standard[-1]}  "
              f"consistent={case.evals_consistent[-1]}")
    return 0


def _cmd_list_methods(args) -> int:
    print("time integrators / pseudo-time methods:")
    for name in available_tableaux():
        tab = tableau(name)
        kind = "explicit" if tab.is_explicit else "implicit"
        from .butcher import find_v

        v = find_v(tab)
        extract = "extractable" if (tab.is_explicit or v is not None) else "no v-vector"
        print(f"  {name:20s} s={tab.s}  {kind:8s}  {extract}")
    print("numerical fluxes:")
    for name in flux_names():
        print(f"  {name}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consiter",
        description="Conservation-aware implicit finite-volume solvers "
                    "and iteration audits.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="advance a configured problem in time")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="artifact directory (default from config)")
    p_run.set_defaults(func=_cmd_run)

    p_aud = sub.add_parser("audit", help="conservation report from run artifacts")
    p_aud.add_argument("artifacts", help="directory written by 'run'")
    p_aud.add_argument("--out", help="also write the JSON report here")
    p_aud.set_defaults(func=_cmd_audit)

    p_conv = sub.add_parser("convergence", help="grid refinement study to CSV")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--out", required=True, help="CSV output path")
    p_conv.set_defaults(func=_cmd_convergence)

    p_kry = sub.add_parser(
        "krylov-equiv",
        help="check GMRES iterates against their explicit pseudo-time twins")
    p_kry.add_argument("--count", type=int, default=20)
    p_kry.add_argument("--seed", type=int, default=0)
    p_kry.add_argument("--max-size", type=int, default=24)
    p_kry.add_argument("--max-depth", type=int, default=5)
    p_kry.add_argument("--tol", type=float, default=1e-9)
    p_kry.set_defaults(func=_cmd_krylov_equiv)

    p_acc = sub.add_parser("accel",
                           help="Newton-GMRES cost with/without consistent guess")
    p_acc.add_argument("--out", required=True, help="CSV output path")
    p_acc.add_argument("--nx", type=int, nargs="+", default=[20, 40, 80])
    p_acc.add_argument("--dt", type=float, default=0.1)
    p_acc.add_argument("--tol", type=float, default=1e-11)
    p_acc.set_defaults(func=_cmd_accel)

    p_list = sub.add_parser("list-methods", help="catalog of methods and fluxes")
    p_list.set_defaults(func=_cmd_list_methods)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ConsIterError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
