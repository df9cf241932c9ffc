"""Two-point numerical fluxes and their partial derivatives.

A bivariate flux ``fhat(theta, phi)`` maps a pair of neighbor states to the
interface flux; conservative-form machinery (residuals, Newton interface
fluxes, effective-flux reconstruction) only ever touches fluxes through this
interface.  States are batched arrays of shape ``(..., m)``; derivatives are
``(..., m, m)`` with ``d[..., i, j] = d fhat_i / d state_j``.

Symmetry matters downstream: a symmetric flux (``fhat(a,b) = fhat(b,a)``)
and an antisymmetric one (``fhat(a,b) = -fhat(b,a)``) linearize differently,
and the Newton interface flux needs both partials.  Every flux carries a
``symmetry`` tag; :func:`split` produces the symmetric/antisymmetric parts of
a general flux.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import NonphysicalState, UnknownMethodName

__all__ = [
    "BivariateFlux",
    "split",
    "fd_partial_derivative",
    "log_mean",
    "d_log_mean_db",
    "d_log_mean_da",
    "AdvectionCentral",
    "AdvectionUpwind",
    "BurgersCentral",
    "BurgersLaxFriedrichs",
    "LinearSystemCentral",
    "EulerCentral",
    "ChandrashekarFlux",
    "euler_primitives",
    "euler_physical_flux",
    "euler_flux_jacobian",
    "make_flux",
    "flux_names",
]

Symmetry = Literal["symmetric", "antisymmetric", "general"]


class BivariateFlux:
    """Base class; subclasses set ``m``, ``name``, ``symmetry``.

    Subclasses implement ``__call__`` and ``d_phi``; ``d_theta`` has a
    symmetry-derived default and must be overridden for ``symmetry ==
    "general"``.
    """

    m: int = 1
    name: str = ""
    symmetry: Symmetry = "general"

    def __call__(self, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d_phi(self, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d_theta(self, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
        if self.symmetry == "symmetric":
            return self.d_phi(phi, theta)
        if self.symmetry == "antisymmetric":
            return -self.d_phi(phi, theta)
        raise NotImplementedError(f"{self.name or type(self).__name__} must override d_theta")

    def physical(self, u: np.ndarray) -> np.ndarray:
        """The flux at coincident states, ``fhat(u, u)`` (= f(u) if consistent)."""
        return self(u, u)

    def _eye(self, like: np.ndarray) -> np.ndarray:
        """Identity blocks broadcast over the batch shape of ``like``."""
        batch = np.asarray(like).shape[:-1]
        return np.broadcast_to(np.eye(self.m), batch + (self.m, self.m)).copy()

    def __repr__(self):
        return f"{type(self).__name__}({self.name})"


@dataclass
class _SplitPart(BivariateFlux):
    base: BivariateFlux = None  # type: ignore[assignment]
    sign: float = 1.0

    def __post_init__(self):
        self.m = self.base.m
        self.symmetry = "symmetric" if self.sign > 0 else "antisymmetric"
        suffix = "sym" if self.sign > 0 else "anti"
        self.name = f"{self.base.name}-{suffix}"

    def __call__(self, theta, phi):
        return 0.5 * (self.base(theta, phi) + self.sign * self.base(phi, theta))

    def d_phi(self, theta, phi):
        return 0.5 * (self.base.d_phi(theta, phi) + self.sign * self.base.d_theta(phi, theta))


def split(flux: BivariateFlux) -> tuple[BivariateFlux, BivariateFlux]:
    """Symmetric and antisymmetric parts; they sum back to ``flux`` exactly."""
    return _SplitPart(base=flux, sign=+1.0), _SplitPart(base=flux, sign=-1.0)


def fd_partial_derivative(flux: BivariateFlux, theta, phi,
                          which: str = "phi") -> np.ndarray:
    """Central-difference partial of ``fhat`` w.r.t. one argument.

    Step ``h = 1e-6 * max(1, ||state||)`` per perturbed argument; used as the
    independent check on the analytic ``d_phi`` / ``d_theta`` implementations.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    target = phi if which == "phi" else theta
    h = 1e-6 * max(1.0, float(np.linalg.norm(target)))
    m = flux.m
    cols = []
    for j in range(m):
        step = np.zeros_like(target)
        step[..., j] = h
        if which == "phi":
            hi, lo = flux(theta, phi + step), flux(theta, phi - step)
        else:
            hi, lo = flux(theta + step, phi), flux(theta - step, phi)
        cols.append((hi - lo) / (2.0 * h))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# scalar model equations

class AdvectionCentral(BivariateFlux):
    """Central flux a*(theta+phi)/2 for u_t + a u_x = 0."""

    symmetry = "symmetric"

    def __init__(self, a: float = 1.0):
        self.a = float(a)
        self.name = "advection-central"

    def __call__(self, theta, phi):
        return 0.5 * self.a * (np.asarray(theta) + np.asarray(phi))

    def d_phi(self, theta, phi):
        return 0.5 * self.a * self._eye(phi)


class AdvectionUpwind(BivariateFlux):
    """Upwind flux a+ * theta + a- * phi (a+- = (a ± |a|)/2)."""

    symmetry = "general"

    def __init__(self, a: float = 1.0):
        self.a = float(a)
        self.name = "advection-upwind"

    def __call__(self, theta, phi):
        ap = 0.5 * (self.a + abs(self.a))
        am = 0.5 * (self.a - abs(self.a))
        return ap * np.asarray(theta) + am * np.asarray(phi)

    def d_phi(self, theta, phi):
        return 0.5 * (self.a - abs(self.a)) * self._eye(phi)

    def d_theta(self, theta, phi):
        return 0.5 * (self.a + abs(self.a)) * self._eye(theta)


class BurgersCentral(BivariateFlux):
    """Central flux (theta^2 + phi^2)/4 for u_t + (u^2/2)_x = 0."""

    symmetry = "symmetric"
    name = "burgers-central"

    def __call__(self, theta, phi):
        return 0.25 * (np.asarray(theta) ** 2 + np.asarray(phi) ** 2)

    def d_phi(self, theta, phi):
        return (0.5 * np.asarray(phi))[..., None] * self._eye(phi)


class BurgersLaxFriedrichs(BivariateFlux):
    """Central Burgers flux plus Lax-Friedrichs dissipation lam*(theta-phi)/2."""

    symmetry = "general"

    def __init__(self, lam: float = 1.0):
        self.lam = float(lam)
        self.name = "burgers-lf"

    def __call__(self, theta, phi):
        theta = np.asarray(theta)
        phi = np.asarray(phi)
        return 0.25 * (theta**2 + phi**2) - 0.5 * self.lam * (phi - theta)

    def d_phi(self, theta, phi):
        return (0.5 * np.asarray(phi) - 0.5 * self.lam)[..., None] * self._eye(phi)

    def d_theta(self, theta, phi):
        return (0.5 * np.asarray(theta) + 0.5 * self.lam)[..., None] * self._eye(theta)


class LinearSystemCentral(BivariateFlux):
    """Central flux B*(theta+phi)/2 for the linear system u_t + (B u)_x = 0."""

    symmetry = "symmetric"

    def __init__(self, B: np.ndarray, name: str = "linear-system-central"):
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        if self.B.shape[0] != self.B.shape[1]:
            raise ValueError("B must be square")
        self.m = self.B.shape[0]
        self.name = name

    def __call__(self, theta, phi):
        avg = 0.5 * (np.asarray(theta) + np.asarray(phi))
        return avg @ self.B.T

    def d_phi(self, theta, phi):
        return np.broadcast_to(0.5 * self.B, np.asarray(phi).shape[:-1] + self.B.shape).copy()


# ---------------------------------------------------------------------------
# logarithmic mean with series fallback

_SERIES_CUT = 1e-4


def log_mean(a, b):
    """Numerically robust logarithmic mean (b - a)/(log b - log a).

    Written as ``(a+b) / (2 G(f))`` with ``f = (b-a)/(b+a)`` and
    ``G(f) = atanh(f)/f``; for ``|f| < 1e-4`` G is replaced by its Taylor
    polynomial ``1 + f^2/3 + f^4/5 + f^6/7`` to avoid 0/0 cancellation.
    Requires positive arguments (so always |f| < 1).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    f = (b - a) / (b + a)
    small = np.abs(f) < _SERIES_CUT
    f_safe = np.where(small, 0.5, f)  # placeholder keeps atanh finite off-branch
    u = f * f
    G = np.where(small, 1.0 + u * (1.0 / 3.0 + u * (1.0 / 5.0 + u / 7.0)),
                 np.arctanh(f_safe) / f_safe)
    return (a + b) / (2.0 * G)


def d_log_mean_db(a, b):
    """Partial derivative of :func:`log_mean` w.r.t. its second argument.

    With L = (a+b)/(2G) one has dL/db = 1/(2G) - a G'(f) / ((a+b) G^2);
    both G and G' use the same series cut as :func:`log_mean`.  At a == b the
    value is exactly 1/2.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    f = (b - a) / (b + a)
    small = np.abs(f) < _SERIES_CUT
    f_safe = np.where(small, 0.5, f)
    u = f * f
    G = np.where(small, 1.0 + u * (1.0 / 3.0 + u * (1.0 / 5.0 + u / 7.0)),
                 np.arctanh(f_safe) / f_safe)
    Gp = np.where(small, f * (2.0 / 3.0 + u * (4.0 / 5.0 + u * (6.0 / 7.0))),
                  (1.0 / (1.0 - f_safe * f_safe) - G) / f_safe)
    return 1.0 / (2.0 * G) - a * Gp / ((a + b) * G * G)


def d_log_mean_da(a, b):
    return d_log_mean_db(b, a)


# ---------------------------------------------------------------------------
# 2D compressible Euler

_DIRECTIONS = {"x": (1.0, 0.0), "y": (0.0, 1.0)}


def _normal(direction) -> tuple[float, float]:
    try:
        return _DIRECTIONS[direction]
    except (KeyError, TypeError):
        nx, ny = direction
        return float(nx), float(ny)


def euler_primitives(u: np.ndarray, gamma: float = 1.4, check: bool = True):
    """Split conservative states ``(rho, rho vx, rho vy, rho E)`` into
    ``(rho, vx, vy, p)``; raises :class:`NonphysicalState` on rho <= 0 or
    p <= 0 anywhere in the batch (no clamping — a violated state aborts)."""
    u = np.asarray(u, dtype=float)
    rho = u[..., 0]
    if check and not np.all(rho > 0.0):
        raise NonphysicalState(f"non-positive density (min {rho.min():.3e})")
    vx = u[..., 1] / rho
    vy = u[..., 2] / rho
    p = (gamma - 1.0) * (u[..., 3] - 0.5 * rho * (vx**2 + vy**2))
    if check and not np.all(p > 0.0):
        raise NonphysicalState(f"non-positive pressure (min {p.min():.3e})")
    return rho, vx, vy, p


def euler_physical_flux(u: np.ndarray, direction, gamma: float = 1.4) -> np.ndarray:
    """Projected Euler flux F(u)·n for a unit normal n in {x, y}."""
    nx, ny = _normal(direction)
    rho, vx, vy, p = euler_primitives(u, gamma)
    un = vx * nx + vy * ny
    f = np.empty_like(np.asarray(u, dtype=float))
    f[..., 0] = rho * un
    f[..., 1] = rho * vx * un + p * nx
    f[..., 2] = rho * vy * un + p * ny
    f[..., 3] = (np.asarray(u)[..., 3] + p) * un
    return f


def euler_flux_jacobian(u: np.ndarray, direction, gamma: float = 1.4) -> np.ndarray:
    """Exact Jacobian dF·n/du, shape ``(..., 4, 4)``."""
    nx, ny = _normal(direction)
    u = np.asarray(u, dtype=float)
    rho, vx, vy, p = euler_primitives(u, gamma)
    un = vx * nx + vy * ny
    q2h = 0.5 * (vx**2 + vy**2)          # kinetic energy per unit mass
    phi2 = (gamma - 1.0) * q2h
    H = (u[..., 3] + p) / rho            # total enthalpy
    g1 = gamma - 1.0

    J = np.empty(u.shape[:-1] + (4, 4))
    J[..., 0, 0] = 0.0
    J[..., 0, 1] = nx
    J[..., 0, 2] = ny
    J[..., 0, 3] = 0.0

    J[..., 1, 0] = phi2 * nx - vx * un
    J[..., 1, 1] = un + (2.0 - gamma) * vx * nx
    J[..., 1, 2] = vx * ny - g1 * vy * nx
    J[..., 1, 3] = g1 * nx

    J[..., 2, 0] = phi2 * ny - vy * un
    J[..., 2, 1] = vy * nx - g1 * vx * ny
    J[..., 2, 2] = un + (2.0 - gamma) * vy * ny
    J[..., 2, 3] = g1 * ny

    J[..., 3, 0] = (phi2 - H) * un
    J[..., 3, 1] = H * nx - g1 * vx * un
    J[..., 3, 2] = H * ny - g1 * vy * un
    J[..., 3, 3] = gamma * un
    return J


class EulerCentral(BivariateFlux):
    """Arithmetic average (F(theta) + F(phi))/2 of the projected Euler flux."""

    m = 4
    symmetry = "symmetric"

    def __init__(self, direction="x", gamma: float = 1.4):
        self.direction = direction
        self.gamma = float(gamma)
        self.name = "euler-central"

    def __call__(self, theta, phi):
        return 0.5 * (euler_physical_flux(theta, self.direction, self.gamma)
                      + euler_physical_flux(phi, self.direction, self.gamma))

    def d_phi(self, theta, phi):
        return 0.5 * euler_flux_jacobian(phi, self.direction, self.gamma)

    def physical(self, u):
        return euler_physical_flux(u, self.direction, self.gamma)


class ChandrashekarFlux(BivariateFlux):
    """Kinetic-energy and entropy conservative two-point Euler flux.

    With logarithmic means ``rho^ = lm(rho_L, rho_R)``, ``beta^ = lm(beta_L,
    beta_R)`` of the inverse temperatures ``beta = rho/(2p)``, arithmetic
    means written with overbars, and ``p^ = rho_bar/(2 beta_bar)``:

        F_rho  = rho^ * un_bar
        F_mom  = F_rho * (u_bar, v_bar) + p^ * n
        F_E    = F_rho * [1/(2(gamma-1) beta^) - |V|^2_bar/2] + F_mom · (u_bar, v_bar)

    ``d_phi`` is assembled analytically by chaining the primitive-variable
    derivatives (including both log-mean branches) through dprim/dU.
    """

    m = 4
    symmetry = "symmetric"

    def __init__(self, direction="x", gamma: float = 1.4):
        self.direction = direction
        self.gamma = float(gamma)
        self.name = "euler-chandrashekar"

    # mean-state bundle shared by value and derivative paths
    def _means(self, theta, phi):
        g = self.gamma
        rL, uL, vL, pL = euler_primitives(theta, g)
        rR, uR, vR, pR = euler_primitives(phi, g)
        bL = rL / (2.0 * pL)
        bR = rR / (2.0 * pR)
        return dict(
            rL=rL, uL=uL, vL=vL, pL=pL, rR=rR, uR=uR, vR=vR, pR=pR,
            bL=bL, bR=bR,
            rhat=log_mean(rL, rR), Bhat=log_mean(bL, bR),
            rbar=0.5 * (rL + rR), bbar=0.5 * (bL + bR),
            ubar=0.5 * (uL + uR), vbar=0.5 * (vL + vR),
            vel2=0.5 * (uL**2 + vL**2 + uR**2 + vR**2),
        )

    def __call__(self, theta, phi):
        nx, ny = _normal(self.direction)
        M = self._means(theta, phi)
        phat = M["rbar"] / (2.0 * M["bbar"])
        un = M["ubar"] * nx + M["vbar"] * ny
        T = 0.5 * (1.0 / ((self.gamma - 1.0) * M["Bhat"]) - M["vel2"])
        f = np.empty(np.asarray(phi, dtype=float).shape)
        f[..., 0] = M["rhat"] * un
        f[..., 1] = f[..., 0] * M["ubar"] + phat * nx
        f[..., 2] = f[..., 0] * M["vbar"] + phat * ny
        f[..., 3] = f[..., 0] * T + f[..., 1] * M["ubar"] + f[..., 2] * M["vbar"]
        return f

    def d_phi(self, theta, phi):
        nx, ny = _normal(self.direction)
        g = self.gamma
        M = self._means(theta, phi)
        rR, uR, vR, pR = M["rR"], M["uR"], M["vR"], M["pR"]
        rhat, Bhat, rbar, bbar = M["rhat"], M["Bhat"], M["rbar"], M["bbar"]
        ubar, vbar, vel2 = M["ubar"], M["vbar"], M["vel2"]

        un = ubar * nx + vbar * ny
        phat = rbar / (2.0 * bbar)
        T = 0.5 * (1.0 / ((g - 1.0) * Bhat) - vel2)
        F1 = rhat * un
        F2 = F1 * ubar + phat * nx
        F3 = F1 * vbar + phat * ny

        # chained sensitivities w.r.t. right-state primitives (rho, u, v, p)
        drhat_dr = d_log_mean_db(M["rL"], rR)
        dBhat_db = d_log_mean_db(M["bL"], M["bR"])
        dbR_dr = 1.0 / (2.0 * pR)
        dbR_dp = -rR / (2.0 * pR**2)
        dBhat_dr = dBhat_db * dbR_dr
        dBhat_dp = dBhat_db * dbR_dp
        dbbar_dr = 0.5 * dbR_dr
        dbbar_dp = 0.5 * dbR_dp
        dphat_dr = 0.25 / bbar - rbar * dbbar_dr / (2.0 * bbar**2)
        dphat_dp = -rbar * dbbar_dp / (2.0 * bbar**2)
        dT_dr = -0.5 * dBhat_dr / ((g - 1.0) * Bhat**2)
        dT_dp = -0.5 * dBhat_dp / ((g - 1.0) * Bhat**2)

        batch = np.asarray(phi, dtype=float).shape[:-1]
        D = np.zeros(batch + (4, 4))  # D[..., i, k] = dF_i/dprim_k

        D[..., 0, 0] = drhat_dr * un
        D[..., 0, 1] = 0.5 * rhat * nx
        D[..., 0, 2] = 0.5 * rhat * ny

        D[..., 1, 0] = D[..., 0, 0] * ubar + dphat_dr * nx
        D[..., 1, 1] = D[..., 0, 1] * ubar + 0.5 * F1
        D[..., 1, 2] = D[..., 0, 2] * ubar
        D[..., 1, 3] = dphat_dp * nx

        D[..., 2, 0] = D[..., 0, 0] * vbar + dphat_dr * ny
        D[..., 2, 1] = D[..., 0, 1] * vbar
        D[..., 2, 2] = D[..., 0, 2] * vbar + 0.5 * F1
        D[..., 2, 3] = dphat_dp * ny

        D[..., 3, 0] = (D[..., 0, 0] * T + F1 * dT_dr
                        + D[..., 1, 0] * ubar + D[..., 2, 0] * vbar)
        D[..., 3, 1] = (D[..., 0, 1] * T - 0.5 * F1 * uR
                        + D[..., 1, 1] * ubar + 0.5 * F2 + D[..., 2, 1] * vbar)
        D[..., 3, 2] = (D[..., 0, 2] * T - 0.5 * F1 * vR
                        + D[..., 1, 2] * ubar + D[..., 2, 2] * vbar + 0.5 * F3)
        D[..., 3, 3] = (F1 * dT_dp + D[..., 1, 3] * ubar + D[..., 2, 3] * vbar)

        # dprim/dU of the right state
        P = np.zeros(batch + (4, 4))
        q2h = 0.5 * (uR**2 + vR**2)
        P[..., 0, 0] = 1.0
        P[..., 1, 0] = -uR / rR
        P[..., 1, 1] = 1.0 / rR
        P[..., 2, 0] = -vR / rR
        P[..., 2, 2] = 1.0 / rR
        P[..., 3, 0] = (g - 1.0) * q2h
        P[..., 3, 1] = -(g - 1.0) * uR
        P[..., 3, 2] = -(g - 1.0) * vR
        P[..., 3, 3] = g - 1.0

        return np.einsum("...ik,...kj->...ij", D, P)

    def physical(self, u):
        return euler_physical_flux(u, self.direction, self.gamma)


# ---------------------------------------------------------------------------
# catalog (names as accepted by run configs)

_FLUX_BUILDERS = {
    "advection-central": lambda params, direction: AdvectionCentral(a=params.get("a", 1.0)),
    "advection-upwind": lambda params, direction: AdvectionUpwind(a=params.get("a", 1.0)),
    "burgers-central": lambda params, direction: BurgersCentral(),
    "burgers-lf": lambda params, direction: BurgersLaxFriedrichs(lam=params.get("lam", 1.0)),
    "euler-central": lambda params, direction: EulerCentral(
        direction=direction or "x", gamma=params.get("gamma", 1.4)),
    "euler-chandrashekar": lambda params, direction: ChandrashekarFlux(
        direction=direction or "x", gamma=params.get("gamma", 1.4)),
}


def make_flux(name: str, params: dict | None = None, direction=None) -> BivariateFlux:
    """Build a catalog flux by name.  ``direction`` applies to Euler fluxes."""
    try:
        builder = _FLUX_BUILDERS[name]
    except KeyError:
        raise UnknownMethodName(
            f"unknown flux {name!r}; available: {', '.join(sorted(_FLUX_BUILDERS))}"
        ) from None
    return builder(params or {}, direction)


def flux_names() -> list[str]:
    return sorted(_FLUX_BUILDERS)
