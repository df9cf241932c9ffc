"""Explicit pseudo-time iteration of implicit FV systems, with flux traces.

One "iteration" is a single explicit RK step of size ``dtau = mu * dt``
applied to ``du/dtau = -g(u)``; a :class:`PseudoTimeSchedule` is the finite
list of (tableau, mu) pairs actually applied.  The engine records, per
iteration and per stage, the interface-flux arrays the residual used — the
raw material for reconstructing the effective numerical flux of the overall
update (see :mod:`consiter.audit`).

The damping of each iteration is the tableau's stability function at
``-mu``; the product over a schedule determines the consistency factor

    c = 1 - prod_l phi_l(-mu_l),

the factor by which the iterated scheme's effective flux (and hence its
propagation speed, for advection) is scaled relative to the target scheme.
An empty schedule leaves c = 0; prepending a single explicit-Euler step with
mu = 1 forces phi(-1) = 0 and hence c = 1 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .butcher import ButcherTableau, stability_function, tableau as lookup_tableau
from .errors import NoVVector
from .butcher import find_v

__all__ = [
    "ScheduleStep",
    "PseudoTimeSchedule",
    "PseudoTrace",
    "erk_pseudo_step",
    "pseudo_time_iterate",
    "consistency_factor",
    "newton_pseudo_consistency_factor",
    "enforce_flux_consistency",
    "extract_step",
]


@dataclass(frozen=True)
class ScheduleStep:
    tableau: ButcherTableau
    mu: float

    def __post_init__(self):
        if not self.tableau.is_explicit:
            raise ValueError(f"pseudo-time steps must be explicit, got {self.tableau!r}")
        if not self.mu > 0.0:
            raise ValueError(f"pseudo-time step ratio must be positive, got mu={self.mu}")


@dataclass(frozen=True)
class PseudoTimeSchedule:
    """A finite sequence of explicit pseudo-time steps."""

    steps: tuple[ScheduleStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @classmethod
    def from_spec(cls, spec) -> "PseudoTimeSchedule":
        """Build from ``[(name_or_tableau, mu), ...]``."""
        steps = []
        for method, mu in spec:
            tab = method if isinstance(method, ButcherTableau) else lookup_tableau(method)
            steps.append(ScheduleStep(tab, float(mu)))
        return cls(tuple(steps))

    @classmethod
    def repeated(cls, method, mus) -> "PseudoTimeSchedule":
        """One tableau applied with each ratio in ``mus``."""
        return cls.from_spec([(method, mu) for mu in mus])

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def prepend(self, step: ScheduleStep) -> "PseudoTimeSchedule":
        return PseudoTimeSchedule((step,) + self.steps)


@dataclass
class PseudoTrace:
    """Iterates and per-stage interface-flux records of one pseudo-time run.

    ``stage_fluxes[k][j]`` is the tuple of per-direction interface-flux
    arrays at stage j of iteration k (empty list when recording was off);
    ``residual_norms[k]`` is ||g(u^(k))|| read off the first stage for free
    (all catalog tableaux have a trivial first stage).
    """

    schedule: PseudoTimeSchedule
    iterates: list = dc_field(default_factory=list)
    stage_fluxes: list = dc_field(default_factory=list)
    residual_norms: list = dc_field(default_factory=list)


def erk_pseudo_step(residual, u: np.ndarray, tab: ButcherTableau, mu: float,
                    record_fluxes: bool = False):
    """One explicit RK step of size ``mu * residual.dt`` on ``du/dtau = -g``.

    Returns ``(u_next, stage_records, gnorm)`` where ``stage_records`` is a
    list over stages of per-direction flux tuples (empty when not recording)
    and ``gnorm`` is the residual norm at the first stage.
    """
    dtau = mu * residual.dt
    s = tab.s
    u = np.asarray(u, dtype=float)
    stage_g = []
    records = []
    u_next = u.copy()
    for j in range(s):
        U = u.copy()
        for l in range(j):
            a_jl = tab.A[j, l]
            if a_jl != 0.0:
                U -= dtau * a_jl * stage_g[l]
        if record_fluxes:
            records.append(residual.interface_fluxes(U))
        g = residual(U)
        stage_g.append(g)
        if tab.b[j] != 0.0:
            u_next -= dtau * tab.b[j] * g
    gnorm = residual.norm(stage_g[0])
    return u_next, records, gnorm


def pseudo_time_iterate(residual, u0: np.ndarray, schedule: PseudoTimeSchedule,
                        record_fluxes: bool = False):
    """Apply a full schedule; returns ``(u_N, PseudoTrace)``.

    ``u0`` is the initial iterate (the previous time level for physical
    steps, zero for linear correction equations).
    """
    trace = PseudoTrace(schedule=schedule)
    u = np.asarray(u0, dtype=float).copy()
    trace.iterates.append(u.copy())
    for step in schedule:
        u, records, gnorm = erk_pseudo_step(residual, u, step.tableau, step.mu,
                                            record_fluxes=record_fluxes)
        trace.iterates.append(u.copy())
        trace.stage_fluxes.append(records)
        trace.residual_norms.append(gnorm)
    return u, trace


def consistency_factor(schedule: PseudoTimeSchedule) -> float:
    """``c = 1 - prod_l phi_l(-mu_l)`` (0 for an empty schedule)."""
    prod = 1.0
    for step in schedule:
        prod *= float(stability_function(step.tableau, -step.mu))
    return 1.0 - prod


def newton_pseudo_consistency_factor(schedule: PseudoTimeSchedule, n_newton: int) -> float:
    """Consistency factor when each of ``n_newton`` Newton iterations is
    solved by the same pseudo-time schedule: ``c = 1 - (prod phi)^K``."""
    if n_newton < 0:
        raise ValueError("n_newton must be nonnegative")
    prod = 1.0
    for step in schedule:
        prod *= float(stability_function(step.tableau, -step.mu))
    return 1.0 - prod**n_newton


def enforce_flux_consistency(schedule: PseudoTimeSchedule) -> PseudoTimeSchedule:
    """Prepend one explicit-Euler step with mu = 1, making c = 1 exactly.

    phi_EE(-1) = 0 annihilates the product regardless of the rest of the
    schedule, and the added step costs a single residual evaluation.
    """
    return schedule.prepend(ScheduleStep(lookup_tableau("explicit-euler"), 1.0))


def extract_step(stage_state: np.ndarray, tab: ButcherTableau, m: int,
                 tol: float = 1e-10) -> np.ndarray:
    """Read the time-step update off a solved stage stack via the v-vector.

    ``stage_state`` has trailing dimension ``s*m`` (stage-major); returns the
    contraction ``(v^T (x) I) U`` with trailing dimension ``m``.  Raises
    :class:`NoVVector` if the tableau admits none.
    """
    v = find_v(tab, tol=tol)
    if v is None:
        raise NoVVector(f"{tab.name or 'tableau'} has no step-extraction vector")
    u = np.asarray(stage_state)
    stages = u.reshape(u.shape[:-1] + (tab.s, m))
    return np.einsum("s,...sm->...m", v, stages)
