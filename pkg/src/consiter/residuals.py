"""Implicit finite-volume residuals in conservative form, and their Jacobians.

The backward-Euler update of a periodic FV discretization is the root of

    g_i(v) = (v_i - u_i^n)/dt + (fhat_{i+1/2}(v) - fhat_{i-1/2}(v))/dx  = 0,

assembled here so that *every* evaluation goes through the interface-flux
arrays — the same arrays the pseudo-time trace records and the audit
telescopes.  States carry trailing shape ``(cells..., m)`` and any number of
leading batch axes (all cell/periodic indexing uses negative axes), which is
what makes batched finite-difference Jacobian assembly a single call.

An implicit Runge-Kutta stage system is the same object on an enlarged
unknown: :class:`StageSystemFlux` composes a base two-point flux with the
stage-coupling matrix ``A`` so the stage residual *is* an
:class:`ImplicitStepResidual1D`/``2D`` with ``m' = s*m`` components.  All
solver, tracing, and audit code then applies to stage systems unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .butcher import ButcherTableau
from .errors import SingularJacobian, ZeroDirection
from .fluxes import BivariateFlux
from .grid import PeriodicGrid1D, PeriodicGrid2D

__all__ = [
    "ImplicitStepResidual1D",
    "ImplicitStepResidual2D",
    "LinearResidual",
    "StageSystemFlux",
    "stage_residual",
    "tile_stages",
    "FDJacobianAction",
    "BlockTridiagonalJacobian",
    "analytic_jacobian_1d",
    "ColoredFDJacobian",
]


class _ResidualBase:
    """Shared plumbing: evaluation counting, norms, divergence assembly."""

    grid = None
    dt: float = 0.0
    state_shape: tuple = ()

    def __init__(self):
        self.evals = 0  # residual evaluations, batched calls count their batch

    def _count(self, v: np.ndarray) -> None:
        extra = v.shape[: v.ndim - len(self.state_shape)]
        self.evals += int(np.prod(extra)) if extra else 1

    def norm(self, v: np.ndarray) -> float:
        """Volume-weighted discrete L2 norm of a state-shaped array."""
        return float(np.sqrt(self.grid.cell_volume) * np.linalg.norm(np.asarray(v).ravel()))

    @property
    def n_dof(self) -> int:
        return int(np.prod(self.state_shape))


class ImplicitStepResidual1D(_ResidualBase):
    """Backward-Euler residual on a 1D periodic grid.

    ``interface_fluxes(v)[0][..., i, :]`` is the flux through interface
    ``i+1/2`` (between cells i and i+1, periodic); the residual uses exactly
    these values, so recorded traces telescope against the state update to
    roundoff.
    """

    def __init__(self, grid: PeriodicGrid1D, flux: BivariateFlux,
                 u_n: np.ndarray, dt: float):
        super().__init__()
        self.grid = grid
        self.flux = flux
        self.u_n = np.asarray(u_n, dtype=float)
        self.dt = float(dt)
        self.state_shape = (grid.n, flux.m)
        if self.u_n.shape != self.state_shape:
            raise ValueError(f"u_n shape {self.u_n.shape} != {self.state_shape}")
        self.n_directions = 1

    def interface_fluxes(self, v: np.ndarray) -> tuple[np.ndarray]:
        v = np.asarray(v)
        return (self.flux(v, np.roll(v, -1, axis=-2)),)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        self._count(v)
        (F,) = self.interface_fluxes(v)
        div = (F - np.roll(F, 1, axis=-2)) / self.grid.dx
        return (v - self.u_n) / self.dt + div


class ImplicitStepResidual2D(_ResidualBase):
    """Dimension-split backward-Euler residual on a 2D periodic grid."""

    def __init__(self, grid: PeriodicGrid2D, flux_x: BivariateFlux,
                 flux_y: BivariateFlux, u_n: np.ndarray, dt: float):
        super().__init__()
        if flux_x.m != flux_y.m:
            raise ValueError("directional fluxes disagree on m")
        self.grid = grid
        self.flux_x = flux_x
        self.flux_y = flux_y
        self.u_n = np.asarray(u_n, dtype=float)
        self.dt = float(dt)
        self.state_shape = (grid.ny, grid.nx, flux_x.m)
        if self.u_n.shape != self.state_shape:
            raise ValueError(f"u_n shape {self.u_n.shape} != {self.state_shape}")
        self.n_directions = 2

    def interface_fluxes(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v)
        Fx = self.flux_x(v, np.roll(v, -1, axis=-2))  # interface (ix+1/2, iy)
        Fy = self.flux_y(v, np.roll(v, -1, axis=-3))  # interface (ix, iy+1/2)
        return Fx, Fy

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        self._count(v)
        Fx, Fy = self.interface_fluxes(v)
        div = (Fx - np.roll(Fx, 1, axis=-2)) / self.grid.dx \
            + (Fy - np.roll(Fy, 1, axis=-3)) / self.grid.dy
        return (v - self.u_n) / self.dt + div


class LinearResidual(_ResidualBase):
    """``g(w) = M w - d`` for a dense matrix: the Krylov/ERK test bed.

    Mimics enough of the residual protocol (``dt``, ``norm``, call) for the
    pseudo-time engine to drive it; there is no grid and no flux trace.
    """

    def __init__(self, M: np.ndarray, d: np.ndarray, dt: float = 1.0):
        super().__init__()
        self.M = np.asarray(M, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.dt = float(dt)
        self.state_shape = (self.M.shape[0],)
        self.n_directions = 0

    def norm(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(np.asarray(v).ravel()))

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w)
        self._count(w)
        return w @ self.M.T - self.d


# ---------------------------------------------------------------------------
# IRK stage systems as enlarged single-step systems

class StageSystemFlux(BivariateFlux):
    """Interface flux of an IRK stage system: ``(A (x) I) . stack_j fhat``.

    States are stage-stacked cell vectors of ``s*m`` entries (stage-major).
    Inherits the base flux's symmetry: conjugating by the fixed matrix
    ``A (x) I`` preserves (anti)symmetry in the two state arguments.
    """

    def __init__(self, base: BivariateFlux, tableau: ButcherTableau):
        self.base = base
        self.tableau = tableau
        self.s = tableau.s
        self.m = tableau.s * base.m
        self.symmetry = base.symmetry
        self.name = f"{base.name}@{tableau.name}"

    def _stages(self, u):
        u = np.asarray(u)
        return u.reshape(u.shape[:-1] + (self.s, self.base.m))

    def __call__(self, theta, phi):
        F = self.base(self._stages(theta), self._stages(phi))  # (..., s, m)
        FA = np.einsum("jl,...lm->...jm", self.tableau.A, F)
        return FA.reshape(np.asarray(phi).shape)

    def _coupled_blocks(self, D):
        """Lift per-stage (..., s, m, m) derivative blocks to (..., s*m, s*m)."""
        A = self.tableau.A
        mb = self.base.m
        out = np.einsum("jl,...lab->...jalb", A, D)
        return out.reshape(D.shape[:-3] + (self.s * mb,) * 2)

    def d_phi(self, theta, phi):
        D = self.base.d_phi(self._stages(theta), self._stages(phi))
        return self._coupled_blocks(D)

    def d_theta(self, theta, phi):
        D = self.base.d_theta(self._stages(theta), self._stages(phi))
        return self._coupled_blocks(D)


def tile_stages(u_n: np.ndarray, s: int) -> np.ndarray:
    """Stage-major replication ``1 (x) u_n``: (cells..., m) -> (cells..., s*m)."""
    u_n = np.asarray(u_n)
    tiled = np.repeat(u_n[..., None, :], s, axis=-2)
    return tiled.reshape(u_n.shape[:-1] + (s * u_n.shape[-1],))


def stage_residual(grid, fluxes, u_n: np.ndarray, dt: float, tableau: ButcherTableau):
    """Build the stage-system residual for an implicit tableau.

    ``fluxes`` is the single flux in 1D or the ``(flux_x, flux_y)`` pair in
    2D.  Returns a residual whose unknown stacks all stage values; solve it
    with any solver in this package, then extract the step with the tableau's
    v-vector (see :func:`consiter.pseudo_time.extract_step`).
    """
    s = tableau.s
    u_tiled = tile_stages(u_n, s)
    if isinstance(grid, PeriodicGrid1D):
        return ImplicitStepResidual1D(grid, StageSystemFlux(fluxes, tableau), u_tiled, dt)
    fx, fy = fluxes
    return ImplicitStepResidual2D(
        grid, StageSystemFlux(fx, tableau), StageSystemFlux(fy, tableau), u_tiled, dt)


# ---------------------------------------------------------------------------
# Jacobian routes

class FDJacobianAction:
    """Matrix-free directional derivative ``J v ~ (g(u + eps v) - g(u))/eps``.

    ``eps = 1e-7 / ||v||`` in the residual's own norm; ``g(u)`` is computed
    once (or passed in, e.g. the Newton residual already in hand) so each
    action costs exactly one residual evaluation.
    """

    def __init__(self, residual, u: np.ndarray, g_u: np.ndarray | None = None):
        self.residual = residual
        self.u = np.asarray(u, dtype=float)
        self.g_u = residual(u) if g_u is None else np.asarray(g_u)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        vnorm = self.residual.norm(v)
        if vnorm == 0.0:
            raise ZeroDirection("directional derivative along the zero vector")
        eps = 1e-7 / vnorm
        return (self.residual(self.u + eps * np.asarray(v)) - self.g_u) / eps


@dataclass
class BlockTridiagonalJacobian:
    """Periodic block-tridiagonal matrix (the analytic 1D residual Jacobian).

    ``lower[i]`` couples cell i to i-1, ``upper[i]`` to i+1 (indices mod n),
    so the periodic corner blocks live in ``lower[0]`` and ``upper[n-1]``.
    """

    diag: np.ndarray   # (n, m, m)
    lower: np.ndarray  # (n, m, m)
    upper: np.ndarray  # (n, m, m)
    _lu: tuple = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @property
    def m(self) -> int:
        return self.diag.shape[1]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        return (
            np.einsum("nij,nj->ni", self.lower, np.roll(v, 1, axis=0))
            + np.einsum("nij,nj->ni", self.diag, v)
            + np.einsum("nij,nj->ni", self.upper, np.roll(v, -1, axis=0))
        )

    def to_dense(self) -> np.ndarray:
        n, m = self.n, self.m
        J = np.zeros((n * m, n * m))
        for i in range(n):
            sl = slice(i * m, (i + 1) * m)
            J[sl, (i - 1) % n * m : ((i - 1) % n + 1) * m] += self.lower[i]
            J[sl, sl] += self.diag[i]
            J[sl, (i + 1) % n * m : ((i + 1) % n + 1) * m] += self.upper[i]
        return J

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Direct solve with a post-hoc residual guard (SingularJacobian)."""
        rhs = np.asarray(rhs, dtype=float)
        if self._lu is None:
            try:
                self._lu = scipy.linalg.lu_factor(self.to_dense())
            except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
                raise SingularJacobian(str(exc)) from exc
        x = scipy.linalg.lu_solve(self._lu, rhs.ravel()).reshape(rhs.shape)
        check = np.linalg.norm((self.matvec(x) - rhs).ravel())
        if not np.isfinite(check) or check > 1e-12 * max(1.0, np.linalg.norm(rhs.ravel())):
            raise SingularJacobian(f"direct solve residual {check:.3e}")
        return x


def analytic_jacobian_1d(residual: ImplicitStepResidual1D,
                         v: np.ndarray) -> BlockTridiagonalJacobian:
    """Exact Jacobian of the 1D residual from the flux partials.

    With ``F_i = fhat(v_i, v_{i+1})``:

        dg_i/dv_{i-1} = -fhat_theta(v_{i-1}, v_i)/dx
        dg_i/dv_i     =  I/dt + (fhat_theta(v_i, v_{i+1}) - fhat_phi(v_{i-1}, v_i))/dx
        dg_i/dv_{i+1} =  fhat_phi(v_i, v_{i+1})/dx

    (both symmetric and antisymmetric flux parts are inside d_theta/d_phi).
    """
    v = np.asarray(v, dtype=float)
    flux, dx, dt = residual.flux, residual.grid.dx, residual.dt
    v_next = np.roll(v, -1, axis=0)
    d_phi = flux.d_phi(v, v_next)      # (n, m, m) at interface i+1/2
    d_theta = flux.d_theta(v, v_next)
    m = flux.m
    eye = np.broadcast_to(np.eye(m), d_phi.shape)
    diag = eye / dt + (d_theta - np.roll(d_phi, 1, axis=0)) / dx
    lower = -np.roll(d_theta, 1, axis=0) / dx
    upper = d_phi / dx
    return BlockTridiagonalJacobian(diag=np.ascontiguousarray(diag),
                                    lower=lower, upper=upper)


class ColoredFDJacobian:
    """Sparse FD Jacobian of a 2D residual, assembled by stencil coloring.

    The dimension-split residual couples cell (ix, iy) only to offsets
    |dx| + 0, |dy| <= 1, so two perturbed cells with both index differences
    nonzero mod 4 never write to the same row: a 4x4 cell coloring (times m
    component shifts) yields every Jacobian column in ``16*m`` batched
    residual evaluations, each entry bit-identical to a one-column FD sweep.
    Requires nx and ny divisible by 4 (periodic wrap must respect colors).
    """

    def __init__(self, residual: ImplicitStepResidual2D, v: np.ndarray):
        grid = residual.grid
        if grid.nx % 4 or grid.ny % 4:
            raise ValueError("colored FD assembly needs nx, ny divisible by 4")
        self.residual = residual
        self.shape_mk = residual.state_shape
        ny, nx, m = self.shape_mk
        v = np.asarray(v, dtype=float)

        eps = 1e-7 * max(1.0, residual.norm(v))
        g0 = residual(v)

        # batch of 16*m probe fields, one per (color, component)
        iy_idx, ix_idx = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
        probes = []
        groups = []
        for cy in range(4):
            for cx in range(4):
                mask = ((ix_idx % 4) == cx) & ((iy_idx % 4) == cy)
                for comp in range(m):
                    probe = np.zeros((ny, nx, m))
                    probe[mask, comp] = eps
                    probes.append(probe)
                    groups.append((mask, comp))
        batch = v[None] + np.stack(probes)          # (16m, ny, nx, m)
        gb = self.residual(batch)                    # one batched evaluation
        diff = (gb - g0) / eps                       # (16m, ny, nx, m)

        # scatter: rows affected by column (iy,ix,comp) are the 5-point stencil
        rows, cols, vals = [], [], []
        offsets = [(0, 0), (0, 1), (0, -1), (1, 0), (-1, 0)]
        cell_index = lambda iy, ix: (iy % ny) * nx + (ix % nx)
        for gidx, (mask, comp) in enumerate(groups):
            ys, xs = np.nonzero(mask)
            for oy, ox in offsets:
                ry = (ys + oy) % ny
                rx = (xs + ox) % nx
                block = diff[gidx, ry, rx, :]        # (ncells_in_group, m)
                col = (ys * nx + xs) * m + comp
                for rc in range(m):
                    rows.append(ry * nx * m + rx * m + rc)
                    cols.append(col)
                    vals.append(block[:, rc])
        n_dof = ny * nx * m
        self.matrix = scipy.sparse.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_dof, n_dof),
        )
        self._solver = None

    def matvec(self, w: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(w).ravel()).reshape(self.shape_mk)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if self._solver is None:
            try:
                self._solver = scipy.sparse.linalg.splu(self.matrix)
            except RuntimeError as exc:
                raise SingularJacobian(str(exc)) from exc
        x = self._solver.solve(rhs.ravel())
        check = np.linalg.norm(self.matrix @ x - rhs.ravel())
        if not np.isfinite(check) or check > 1e-10 * max(1.0, np.linalg.norm(rhs.ravel())):
            raise SingularJacobian(f"sparse solve residual {check:.3e}")
        return x.reshape(rhs.shape)
