"""Conservation-aware iterative solvers for implicit finite-volume schemes.

The package keeps three solver families — explicit pseudo-time iteration,
Newton's method with pluggable inner solvers, and GMRES — behind one
residual interface, and can audit any truncated solve: reconstruct the
effective interface flux it committed to, verify the telescoping
conservation identity, and predict or measure the factor by which the
iteration rescales the physical flux.

Importing this module is cheap; submodules (and numpy with them) load on
first attribute access so the command-line entry point can pin BLAS thread
counts beforehand.
"""

__version__ = "0.1.0"

_SUBMODULES = {
    "audit", "butcher", "cli", "config", "errors", "fluxes", "grid",
    "krylov", "newton", "problems", "pseudo_time", "residuals", "studies",
}

_EXPORTS = {
    # butcher
    "ButcherTableau": "butcher", "stability_function": "butcher",
    "stability_polynomial_coeffs": "butcher", "find_v": "butcher",
    "tableau": "butcher", "available_tableaux": "butcher",
    # grid
    "PeriodicGrid1D": "grid", "PeriodicGrid2D": "grid", "StateField": "grid",
    "total_mass": "grid", "mass_drift": "grid", "discrete_l2_error": "grid",
    "discrete_l2_norm": "grid",
    # fluxes
    "BivariateFlux": "fluxes", "make_flux": "fluxes", "flux_names": "fluxes",
    "ChandrashekarFlux": "fluxes",
    # residuals
    "ImplicitStepResidual1D": "residuals", "ImplicitStepResidual2D": "residuals",
    "stage_residual": "residuals", "tile_stages": "residuals",
    "FDJacobianAction": "residuals", "analytic_jacobian_1d": "residuals",
    "ColoredFDJacobian": "residuals",
    # pseudo time
    "PseudoTimeSchedule": "pseudo_time", "ScheduleStep": "pseudo_time",
    "pseudo_time_iterate": "pseudo_time", "consistency_factor": "pseudo_time",
    "enforce_flux_consistency": "pseudo_time", "extract_step": "pseudo_time",
    # krylov
    "gmres": "krylov", "GmresConfig": "krylov",
    "krylov_to_erk_tableau": "krylov", "recover_alpha": "krylov",
    "verify_krylov_erk_equivalence": "krylov",
    # newton
    "newton_solve": "newton", "NewtonConfig": "newton",
    "DirectInner": "newton", "GmresInner": "newton", "PseudoInner": "newton",
    "MixedInner": "newton", "newton_interface_flux": "newton",
    "eisenstat_walker_eta": "newton",
    # audit
    "reconstruct_h_flux": "audit", "telescoping_residual": "audit",
    "check_local_conservation": "audit", "measure_effective_c": "audit",
    "ConservationReport": "audit",
    # problems / studies
    "advection_problem": "problems", "vortex_problem": "problems",
    "PseudoSolver": "problems", "NewtonSolver": "problems",
    "KrylovSolver": "problems", "run_time_integration": "problems",
    "solver_consistency_factor": "problems",
    "convergence_study": "studies", "acceleration_study": "studies",
    # errors
    "ConsIterError": "errors",
}

__all__ = sorted(_SUBMODULES | set(_EXPORTS)) + ["__version__"]


def __getattr__(name):
    import importlib

    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return __all__
