"""Restarted GMRES with per-iterate traces, and its ERK reinterpretation.

Conservation statements here are about *iterates*, not just the converged
solution, so this GMRES keeps every intermediate iterate ``w^(j)`` (cheap at
the problem sizes this package targets).  The second half of the module makes
the Krylov <-> pseudo-time correspondence executable: any iterate

    w^(k+1) = w^(0) + sum_l alpha_l M^l r^(0)

of a Krylov method for ``M w = d`` equals one explicit pseudo-time RK step
whose tableau has constant subdiagonal ``-a`` and weights solving a unit
upper-triangular system — :func:`krylov_to_erk_tableau` builds that tableau,
:func:`recover_alpha` extracts alpha from a run, and
:func:`verify_krylov_erk_equivalence` replays the step through the
pseudo-time engine and reports the mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .butcher import ButcherTableau
from .errors import LinearSolveFailed, RankDeficient, ZeroParameter
from .pseudo_time import erk_pseudo_step
from .residuals import LinearResidual

__all__ = [
    "GmresConfig",
    "GmresResult",
    "gmres",
    "recover_alpha",
    "krylov_to_erk_tableau",
    "verify_krylov_erk_equivalence",
]

_BREAKDOWN_TOL = 1e-14


@dataclass(frozen=True)
class GmresConfig:
    """``tol`` is relative to ||b|| (not ||r0||) so that a nonzero initial
    guess does not weaken the stopping test; ``tol = 0`` forces the full
    iteration budget (useful for fixed-iteration studies)."""

    restart: int = 30
    max_iter: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if self.restart < 1 or self.max_iter < 0:
            raise ValueError("restart must be >= 1 and max_iter >= 0")


@dataclass
class GmresResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_norms: list = dc_field(default_factory=list)  # [||r0||, ...] estimates
    iterates: list = dc_field(default_factory=list)        # [w^(0), w^(1), ...]
    breakdown: bool = False
    stagnated: bool = False
    matvecs: int = 0


def gmres(matvec, b=None, x0=None, config: GmresConfig = GmresConfig(),
          r0=None, record_iterates: bool = True) -> GmresResult:
    """Restarted GMRES on ``A x = b`` with the action ``matvec``.

    Arnoldi uses modified Gram-Schmidt with one reorthogonalization pass; the
    small least-squares problem is re-solved every step so each iterate is
    available.  Either ``b`` or a precomputed initial residual ``r0 = b -
    A x0`` must be given — passing ``r0`` lets affine problems (``g(w) = 0``)
    start from a nonzero guess without an extra action.  A tiny new-basis
    norm is happy breakdown: the iterate is exact in the current subspace and
    iteration stops (not an error).
    """
    if b is None and r0 is None:
        raise ValueError("need b or r0")
    bnorm = None if b is None else float(np.linalg.norm(np.asarray(b).ravel()))
    matvecs = 0

    if x0 is None:
        shape = np.asarray(b if b is not None else r0).shape
        x = np.zeros(shape)
        r = (np.asarray(b, dtype=float).copy() if r0 is None
             else np.asarray(r0, dtype=float).copy())
    else:
        x = np.asarray(x0, dtype=float).copy()
        if r0 is not None:
            r = np.asarray(r0, dtype=float).copy()
        elif np.all(x == 0.0):
            r = np.asarray(b, dtype=float).copy()
        else:
            r = np.asarray(b, dtype=float) - matvec(x)
            matvecs += 1

    if bnorm is None:
        bnorm = float(np.linalg.norm(r.ravel()))  # best available scale
    target = config.tol * bnorm

    res = GmresResult(x=x.copy(), converged=False, iterations=0)
    rnorm = float(np.linalg.norm(r.ravel()))
    res.residual_norms.append(rnorm)
    if record_iterates:
        res.iterates.append(x.copy())
    if not np.isfinite(rnorm):
        raise LinearSolveFailed("non-finite initial residual")
    if rnorm <= target or config.max_iter == 0:
        res.converged = rnorm <= target
        res.matvecs = matvecs
        return res

    total = 0
    while total < config.max_iter:
        # --- one restart cycle from the current x, r -----------------------
        beta = float(np.linalg.norm(r.ravel()))
        if beta == 0.0:
            res.converged = True
            break
        V = [r / beta]
        k_max = min(config.restart, config.max_iter - total)
        H = np.zeros((k_max + 1, k_max))
        cycle_start_norm = beta
        j = 0
        y = np.zeros(0)
        xj = x
        while j < k_max:
            w = matvec(V[j])
            matvecs += 1
            for i in range(j + 1):  # MGS + one reorthogonalization pass
                hij = float(np.dot(V[i].ravel(), w.ravel()))
                w = w - hij * V[i]
                H[i, j] += hij
            for i in range(j + 1):
                corr = float(np.dot(V[i].ravel(), w.ravel()))
                w = w - corr * V[i]
                H[i, j] += corr
            hnext = float(np.linalg.norm(w.ravel()))
            H[j + 1, j] = hnext
            if hnext > _BREAKDOWN_TOL * max(1.0, np.abs(H[: j + 2, j]).max()):
                V.append(w / hnext)
            else:
                res.breakdown = True  # exact solution within current subspace

            e1 = np.zeros(j + 2)
            e1[0] = beta
            y, *_ = np.linalg.lstsq(H[: j + 2, : j + 1], e1, rcond=None)
            rnorm = float(np.linalg.norm(H[: j + 2, : j + 1] @ y - e1))
            if not np.isfinite(rnorm):
                raise LinearSolveFailed("GMRES least-squares produced non-finite residual")

            xj = x.copy()
            for i in range(j + 1):
                xj += y[i] * V[i]
            total += 1
            j += 1
            res.residual_norms.append(rnorm)
            if record_iterates:
                res.iterates.append(xj.copy())
            if res.breakdown or rnorm <= target or total >= config.max_iter:
                break

        x = xj
        if res.breakdown or rnorm <= target:
            res.converged = rnorm <= target or res.breakdown
            break
        if total >= config.max_iter:
            break
        # restart residual from the Arnoldi relation r = V (beta e1 - H y):
        # a linear combination only, so restarting costs no operator action.
        coeffs = e1 - H[: j + 1, : j] @ y
        r = coeffs[0] * V[0]
        for i in range(1, min(len(V), j + 1)):
            r = r + coeffs[i] * V[i]
        if float(np.linalg.norm(r.ravel())) > (1.0 - 1e-14) * cycle_start_norm:
            res.stagnated = True
            break

    res.x = x
    res.iterations = total
    res.matvecs = matvecs
    return res


# ---------------------------------------------------------------------------
# Krylov iterate -> ERK tableau

def recover_alpha(matvec, r0: np.ndarray, dw: np.ndarray, k: int,
                  cond_limit: float = 1e12) -> np.ndarray:
    """Coefficients of ``dw = sum_{l=0}^{k} alpha_l M^l r0``.

    Builds the monomial Krylov basis by repeated application of ``matvec``
    (an independent route from GMRES's orthonormal basis), column-scales it,
    and solves the least-squares fit.  Raises :class:`RankDeficient` when the
    scaled basis is numerically degenerate or the fit leaves more than
    ``1e-8 * ||dw||`` behind.
    """
    r0 = np.asarray(r0, dtype=float)
    dw = np.asarray(dw, dtype=float).ravel()
    cols = [r0.ravel().copy()]
    vec = r0
    for _ in range(k):
        vec = matvec(vec)
        cols.append(np.asarray(vec).ravel().copy())
    K = np.stack(cols, axis=1)
    scales = np.linalg.norm(K, axis=0)
    if np.any(scales == 0.0):
        raise RankDeficient("zero column in monomial Krylov basis")
    Ks = K / scales
    cond = np.linalg.cond(Ks)
    if cond > cond_limit:
        raise RankDeficient(f"monomial Krylov basis condition {cond:.3e}")
    y, *_ = np.linalg.lstsq(Ks, dw, rcond=None)
    resid = np.linalg.norm(Ks @ y - dw)
    if resid > 1e-8 * max(np.linalg.norm(dw), 1e-300):
        raise RankDeficient(
            f"Krylov fit residual {resid:.3e} exceeds 1e-8*||dw|| (cond {cond:.3e})")
    return y / scales


def krylov_to_erk_tableau(alpha: np.ndarray, a: float = 1.0,
                          dtau: float = 1.0) -> ButcherTableau:
    """The (k+2-1)-stage explicit tableau replaying a Krylov iterate.

    ``A`` has constant subdiagonal ``-a``; the weights b satisfy the unit
    upper-triangular ones system  ``sum_{i>l} b_i = alpha_l a^{-l} /
    dtau^(l+1)``  (one pseudo-time step of size ``dtau`` then reproduces
    ``w^(0) + sum alpha_l M^l r^(0)`` exactly, in exact arithmetic).  ``a``
    rescales stages without changing the step and must be nonzero.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise ValueError("alpha must be a nonempty vector")
    if a == 0.0:
        raise ZeroParameter("stage scaling a must be nonzero")
    if dtau == 0.0:
        raise ZeroParameter("pseudo step dtau must be nonzero")
    k = alpha.size - 1
    s = k + 1
    A = np.zeros((s, s))
    for j in range(1, s):
        A[j, j - 1] = -a
    ell = np.arange(s)
    partial = alpha * a ** (-ell.astype(float)) / dtau ** (ell + 1.0)
    b = np.empty(s)
    b[-1] = partial[-1]
    b[:-1] = partial[:-1] - partial[1:]  # back-substitution of the ones system
    return ButcherTableau(A=A, b=b, name=f"krylov-k{k}")


def verify_krylov_erk_equivalence(M: np.ndarray, d: np.ndarray, w0: np.ndarray,
                                  k: int, a: float = 1.0,
                                  dtau: float = 1.0) -> dict:
    """Run k+1 GMRES iterations on ``M w = d``, rebuild the iterate through
    the equivalent ERK pseudo-time step, and measure the relative mismatch.

    Returns a dict with the achieved iteration count (happy breakdown may
    stop early), the recovered alpha, the tableau, and ``rel_diff``.
    """
    M = np.asarray(M, dtype=float)
    d = np.asarray(d, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    matvec = lambda v: M @ v
    r0 = d - M @ w0
    cfg = GmresConfig(restart=k + 1, max_iter=k + 1, tol=0.0)
    run = gmres(matvec, b=d, x0=w0, config=cfg, r0=r0)
    k_eff = run.iterations - 1
    if k_eff < 0:
        raise LinearSolveFailed("GMRES performed no iterations")
    w_end = run.iterates[k_eff + 1]

    alpha = recover_alpha(matvec, r0, w_end - w0, k_eff)
    tab = krylov_to_erk_tableau(alpha, a=a, dtau=dtau)

    lin = LinearResidual(M, d, dt=1.0)
    replay, _, _ = erk_pseudo_step(lin, w0, tab, mu=dtau)
    rel = float(np.linalg.norm(replay - w_end) / max(np.linalg.norm(w_end), 1e-300))
    return {
        "iterations": k_eff + 1,
        "alpha": alpha,
        "tableau": tab,
        "gmres_iterate": w_end,
        "erk_iterate": replay,
        "rel_diff": rel,
    }
