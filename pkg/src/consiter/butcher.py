"""Butcher tableaux, stability functions, and step-extraction vectors.

A Runge-Kutta method ``(A, b, c)`` is kept as a small frozen dataclass.  Two
pieces of structure matter downstream:

* the stability function ``phi(z) = 1 + z b^T (I - zA)^{-1} 1``, which governs
  how a pseudo-time iteration damps (or fails to damp) the residual, and
* the extraction vector ``v`` with ``v^T A = b^T`` and ``v^T 1 = 1``, which
  lets a time step be read off a solved stage system as a convex-like
  combination of stage values.

Note that ``sum(b) == 1`` is *not* enforced: tableaux synthesized from Krylov
iterations (see :mod:`consiter.krylov`) are legitimate methods whose weights
do not sum to one.  ``ButcherTableau.is_consistent`` reports the property
instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NotExplicit, SingularStageMatrix, UnknownMethodName

__all__ = [
    "ButcherTableau",
    "stability_function",
    "stability_polynomial_coeffs",
    "find_v",
    "tableau",
    "available_tableaux",
    "EXPLICIT_EULER",
    "SSPRK3",
    "IMPLICIT_EULER",
    "IMPLICIT_MIDPOINT",
    "LOBATTO_IIIC_3",
    "RADAU_IIA_2",
]

_CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class ButcherTableau:
    """Runge-Kutta coefficients with light structural validation.

    Parameters
    ----------
    A : (s, s) array_like
    b : (s,) array_like
    c : (s,) array_like, optional
        Defaults to the row sums of ``A``.
    name : str
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray = None  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
        c = self.c
        c = A.sum(axis=1) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
        if c.shape != b.shape:
            raise ValueError(f"c has shape {c.shape}, expected {b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("tableau entries must be finite")
        for arr in (A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def s(self) -> int:
        """Number of stages."""
        return self.b.shape[0]

    @property
    def is_explicit(self) -> bool:
        """True iff ``A`` is strictly lower triangular."""
        return bool(np.all(np.triu(self.A) == 0.0))

    @property
    def is_consistent(self) -> bool:
        """True iff the weights sum to one (first-order consistency)."""
        return bool(abs(self.b.sum() - 1.0) <= _CONSISTENCY_TOL)

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "s": self.s,
                "A": self.A.tolist(),
                "b": self.b.tolist(),
                "c": self.c.tolist(),
                "explicit": self.is_explicit,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ButcherTableau":
        data = json.loads(text)
        return cls(A=np.array(data["A"]), b=np.array(data["b"]),
                   c=np.array(data["c"]), name=data.get("name", ""))

    def __repr__(self):  # keep reprs short in traces
        kind = "explicit" if self.is_explicit else "implicit"
        return f"ButcherTableau({self.name or '?'}, s={self.s}, {kind})"


def stability_function(tab: ButcherTableau, z):
    """Evaluate ``phi(z) = 1 + z b^T (I - zA)^{-1} 1``.

    ``z`` may be real or complex, scalar or any-shaped array; the result has
    the shape of ``z``.  Raises :class:`SingularStageMatrix` when ``I - zA``
    is singular to working precision (poles of phi for implicit methods).
    """
    z = np.asarray(z)
    scalar = z.ndim == 0
    zflat = np.atleast_1d(z).ravel()
    s = tab.s
    eye = np.eye(s)
    ones = np.ones(s)
    out = np.empty(zflat.shape, dtype=complex if np.iscomplexobj(zflat) else float)
    for idx, zv in enumerate(zflat):
        mat = eye - zv * tab.A
        # cheap conditioning guard: desk-scale s, direct cond is fine
        if not np.all(np.isfinite(mat)) or np.linalg.cond(mat) > 1e14:
            raise SingularStageMatrix(
                f"I - zA numerically singular for {tab.name or 'tableau'} at z={zv}"
            )
        out[idx] = 1.0 + zv * (tab.b @ np.linalg.solve(mat, ones))
    out = out.reshape(z.shape)
    return out[()] if scalar else out


def stability_polynomial_coeffs(tab: ButcherTableau) -> np.ndarray:
    """Coefficients ``p_0..p_s`` of phi for an explicit tableau.

    For strictly lower-triangular ``A`` the Neumann series terminates:
    ``phi(z) = 1 + sum_{j=0}^{s-1} (b^T A^j 1) z^{j+1}``, so the polynomial
    is produced exactly (no sampling/fitting).  Coefficients are returned in
    increasing order.
    """
    if not tab.is_explicit:
        raise NotExplicit(f"{tab.name or 'tableau'} is not explicit")
    s = tab.s
    coeffs = np.empty(s + 1)
    coeffs[0] = 1.0
    w = np.ones(s)
    for j in range(s):
        coeffs[j + 1] = tab.b @ w
        w = tab.A @ w
    return coeffs


def find_v(tab: ButcherTableau, tol: float = 1e-10) -> Optional[np.ndarray]:
    """Solve ``v^T A = b^T`` and ``v^T 1 = 1`` jointly; None if incompatible.

    The stacked system ``[A^T; 1^T] v = [b; 1]`` is solved by least squares
    and accepted only if both conditions hold to ``tol`` in the max norm.
    Stiffly accurate methods (last row of A equals b) return a unit vector.
    """
    s = tab.s
    lhs = np.vstack([tab.A.T, np.ones((1, s))])
    rhs = np.concatenate([tab.b, [1.0]])
    v, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.max(np.abs(v @ tab.A - tab.b)) > tol or abs(v.sum() - 1.0) > tol:
        return None
    return v


# ---------------------------------------------------------------------------
# catalog

EXPLICIT_EULER = ButcherTableau(A=[[0.0]], b=[1.0], c=[0.0], name="explicit-euler")

# Shu-Osher SSP-RK3; stability polynomial 1 + z + z^2/2 + z^3/6
SSPRK3 = ButcherTableau(
    A=[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]],
    b=[1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    c=[0.0, 1.0, 0.5],
    name="ssprk3",
)

IMPLICIT_EULER = ButcherTableau(A=[[1.0]], b=[1.0], c=[1.0], name="implicit-euler")

IMPLICIT_MIDPOINT = ButcherTableau(A=[[0.5]], b=[1.0], c=[0.5], name="implicit-midpoint")

LOBATTO_IIIC_3 = ButcherTableau(
    A=[
        [1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 5.0 / 12.0, -1.0 / 12.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    ],
    b=[1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    c=[0.0, 0.5, 1.0],
    name="lobatto-iiic-3",
)

RADAU_IIA_2 = ButcherTableau(
    A=[[5.0 / 12.0, -1.0 / 12.0], [0.75, 0.25]],
    b=[0.75, 0.25],
    c=[1.0 / 3.0, 1.0],
    name="radau-iia-2",
)

_CATALOG = {
    t.name: t
    for t in (
        EXPLICIT_EULER,
        SSPRK3,
        IMPLICIT_EULER,
        IMPLICIT_MIDPOINT,
        LOBATTO_IIIC_3,
        RADAU_IIA_2,
    )
}


def tableau(name: str) -> ButcherTableau:
    """Look up a built-in tableau by name."""
    try:
        return _CATALOG[name]
    except KeyError:
        raise UnknownMethodName(
            f"unknown tableau {name!r}; available: {', '.join(sorted(_CATALOG))}"
        ) from None


def available_tableaux() -> list[str]:
    return sorted(_CATALOG)
